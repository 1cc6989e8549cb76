#!/usr/bin/env node
import yargs from 'yargs'
import { hideBin } from 'yargs/helpers'

import { resolveEncoder } from './encoders.js'
import { extractText, writeExtraction } from './extract.js'
import { readMetadata } from './metadata.js'

async function main() {
  const argv = await yargs(hideBin(process.argv))
    .scriptName('extract-text')
    .option('meta', { type: 'string', demandOption: true, describe: 'JSON-lines item metadata' })
    .option('out', { type: 'string', demandOption: true, describe: 'output feature file' })
    .option('model', { type: 'string', default: 'hash-384', describe: 'encoder name' })
    .strict()
    .parse()

  const encoder = resolveEncoder(argv.model)
  const items = await readMetadata(argv.meta)
  const result = extractText(items, encoder)
  await writeExtraction(argv.out, result, encoder, 'text')
  for (const warning of result.warnings) console.warn(`warning: ${warning}`)
  console.log(`${result.matrix.rows} rows x ${result.matrix.dim} dims -> ${argv.out}`)
}

main().catch((err) => {
  console.error(String(err.message ?? err))
  process.exit(1)
})
