import { promises as fs } from 'node:fs'
import path from 'node:path'

import { Encoder } from './encoders.js'
import { FeatureMatrix, writeFeatureFile } from './format.js'
import { ItemMetadata, combinedText } from './metadata.js'

export interface ExtractResult {
  matrix: FeatureMatrix
  warnings: string[]
}

function emptyMatrix(items: ItemMetadata[], dim: number): FeatureMatrix {
  return {
    rows: items.length,
    dim,
    values: new Float32Array(items.length * dim),
    rowIds: items.map((item) => item.item_raw_id),
  }
}

/** One row per item in input order; items without any text get a zero row
 *  and a warning instead of failing the batch. */
export function extractText(
  items: ItemMetadata[],
  encoder: Encoder,
): ExtractResult {
  const matrix = emptyMatrix(items, encoder.dim)
  const warnings: string[] = []
  items.forEach((item, row) => {
    const text = combinedText(item)
    if (text.length === 0) {
      warnings.push(`item ${item.item_raw_id}: no text, zero row`)
      return
    }
    matrix.values.set(encoder.encode(Buffer.from(text, 'utf-8')), row * encoder.dim)
  })
  return { matrix, warnings }
}

/** Image bytes are read from `imagesDir/<image>`; a missing or unreadable
 *  image yields a zero row and a warning (downstream treats zero rows as
 *  the missing-modality case). */
export async function extractImage(
  items: ItemMetadata[],
  encoder: Encoder,
  imagesDir: string,
): Promise<ExtractResult> {
  const matrix = emptyMatrix(items, encoder.dim)
  const warnings: string[] = []
  for (let row = 0; row < items.length; row++) {
    const item = items[row]
    if (!item.image) {
      warnings.push(`item ${item.item_raw_id}: no image listed, zero row`)
      continue
    }
    let bytes: Buffer
    try {
      bytes = await fs.readFile(path.join(imagesDir, item.image))
    } catch {
      warnings.push(`item ${item.item_raw_id}: unreadable image ${item.image}, zero row`)
      continue
    }
    matrix.values.set(encoder.encode(bytes), row * encoder.dim)
  }
  return { matrix, warnings }
}

/** Write the feature file, id sidecar and a run-metadata JSON recording the
 *  encoder identity next to the output. */
export async function writeExtraction(
  outPath: string,
  result: ExtractResult,
  encoder: Encoder,
  kind: 'text' | 'image',
): Promise<void> {
  await writeFeatureFile(outPath, result.matrix)
  const meta = {
    kind,
    encoder: encoder.name,
    dim: encoder.dim,
    rows: result.matrix.rows,
    warnings: result.warnings,
  }
  await fs.writeFile(outPath + '.meta.json', JSON.stringify(meta, null, 2) + '\n')
}
