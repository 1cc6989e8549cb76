import { promises as fs } from 'node:fs'
import os from 'node:os'
import path from 'node:path'
import { afterEach, beforeEach, describe, expect, it } from 'vitest'

import { resolveEncoder } from '../src/encoders.js'
import { extractImage, extractText, writeExtraction } from '../src/extract.js'
import { readFeatureFile } from '../src/format.js'
import { ItemMetadata, readMetadata, validateItem } from '../src/metadata.js'

let dir: string

beforeEach(async () => {
  dir = await fs.mkdtemp(path.join(os.tmpdir(), 'idsf-ext-'))
})

afterEach(async () => {
  await fs.rm(dir, { recursive: true, force: true })
})

const items: ItemMetadata[] = [
  { item_raw_id: 'i0', title: 'wooden rattle', category: 'toys' },
  { item_raw_id: 'i1', title: 'wooden rattle', category: 'toys' },
  { item_raw_id: 'i2', description: 'soft crib blanket', brand: 'acme' },
]

describe('encoders', () => {
  it('resolves hash-<dim> names and rejects others', () => {
    const enc = resolveEncoder('hash-384')
    expect(enc.dim).toBe(384)
    expect(enc.name).toBe('hash-384')
    expect(() => resolveEncoder('resnet50')).toThrow(/unknown encoder/)
    expect(() => resolveEncoder('hash-0')).toThrow(/out of range/)
  })

  it('is deterministic and input-sensitive', () => {
    const enc = resolveEncoder('hash-16')
    const a = enc.encode(Buffer.from('same text'))
    const b = enc.encode(Buffer.from('same text'))
    const c = enc.encode(Buffer.from('other text'))
    expect(Array.from(a)).toEqual(Array.from(b))
    expect(Array.from(a)).not.toEqual(Array.from(c))
    const norm = Math.sqrt(Array.from(a).reduce((s, v) => s + v * v, 0))
    expect(norm).toBeCloseTo(1, 5)
  })
})

describe('extract-text', () => {
  it('keeps input order and gives identical text identical rows', () => {
    const enc = resolveEncoder('hash-8')
    const { matrix, warnings } = extractText(items, enc)
    expect(warnings).toEqual([])
    expect(matrix.rowIds).toEqual(['i0', 'i1', 'i2'])
    const row = (r: number) => Array.from(matrix.values.slice(r * 8, r * 8 + 8))
    expect(row(0)).toEqual(row(1)) // same title+category
    expect(row(0)).not.toEqual(row(2))
  })

  it('zero row plus warning for items without text', () => {
    const enc = resolveEncoder('hash-4')
    const meta: ItemMetadata[] = [
      { item_raw_id: 'x', image: 'x.jpg' },
      { item_raw_id: 'y', title: 'has text' },
    ]
    const { matrix, warnings } = extractText(meta, enc)
    expect(warnings).toHaveLength(1)
    expect(warnings[0]).toMatch(/item x/)
    expect(Array.from(matrix.values.slice(0, 4))).toEqual([0, 0, 0, 0])
    expect(Array.from(matrix.values.slice(4, 8))).not.toEqual([0, 0, 0, 0])
  })

  it('writes a validating file with encoder metadata', async () => {
    const enc = resolveEncoder('hash-6')
    const out = path.join(dir, 'text.mat')
    await writeExtraction(out, extractText(items, enc), enc, 'text')
    const back = await readFeatureFile(out)
    expect(back.rows).toBe(3)
    expect(back.dim).toBe(6)
    expect(back.rowIds).toEqual(['i0', 'i1', 'i2'])
    const meta = JSON.parse(await fs.readFile(out + '.meta.json', 'utf-8'))
    expect(meta).toMatchObject({ kind: 'text', encoder: 'hash-6', rows: 3 })
  })
})

describe('extract-image', () => {
  it('encodes byte-identical images identically, zero-rows the rest', async () => {
    await fs.writeFile(path.join(dir, 'a.png'), Buffer.from([1, 2, 3, 4]))
    await fs.writeFile(path.join(dir, 'b.png'), Buffer.from([1, 2, 3, 4]))
    const meta: ItemMetadata[] = [
      { item_raw_id: 'i0', image: 'a.png' },
      { item_raw_id: 'i1', image: 'b.png' },
      { item_raw_id: 'i2', image: 'missing.png' },
      { item_raw_id: 'i3', title: 'no image at all' },
    ]
    const enc = resolveEncoder('hash-8')
    const { matrix, warnings } = await extractImage(meta, enc, dir)
    const row = (r: number) => Array.from(matrix.values.slice(r * 8, r * 8 + 8))
    expect(row(0)).toEqual(row(1))
    expect(row(2)).toEqual(new Array(8).fill(0))
    expect(row(3)).toEqual(new Array(8).fill(0))
    expect(warnings).toHaveLength(2)
    expect(warnings[0]).toMatch(/unreadable image/)
  })
})

describe('metadata parsing', () => {
  it('reads JSON lines and rejects bad records', async () => {
    const metaPath = path.join(dir, 'items.jsonl')
    await fs.writeFile(
      metaPath,
      items.map((i) => JSON.stringify(i)).join('\n') + '\n',
    )
    const parsed = await readMetadata(metaPath)
    expect(parsed.map((i) => i.item_raw_id)).toEqual(['i0', 'i1', 'i2'])

    expect(() => validateItem({ title: 'no id' }, 1)).toThrow(/item_raw_id/)
    expect(() => validateItem({ item_raw_id: 'z' }, 2)).toThrow(/no text fields/)
    expect(() => validateItem({ item_raw_id: 'z', title: 5 }, 3)).toThrow(
      /must be a string/,
    )

    await fs.writeFile(metaPath, '{"item_raw_id": "a", "title": "t"}\nnot json\n')
    await expect(readMetadata(metaPath)).rejects.toThrow(/line 2: invalid JSON/)

    const dup = '{"item_raw_id": "a", "title": "t"}\n'
    await fs.writeFile(metaPath, dup + dup)
    await expect(readMetadata(metaPath)).rejects.toThrow(/duplicate item id/)
  })
})
