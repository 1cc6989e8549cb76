import { promises as fs } from 'node:fs'

export interface ItemMetadata {
  item_raw_id: string
  title?: string
  description?: string
  category?: string
  brand?: string
  image?: string
}

const TEXT_FIELDS = ['title', 'description', 'category', 'brand'] as const

/** Title, description, category and brand concatenated in that order. */
export function combinedText(item: ItemMetadata): string {
  return TEXT_FIELDS.map((f) => (item[f] ?? '').trim())
    .filter((s) => s.length > 0)
    .join(' ')
}

export function validateItem(item: unknown, line: number): ItemMetadata {
  if (typeof item !== 'object' || item === null || Array.isArray(item)) {
    throw new Error(`line ${line}: expected a JSON object`)
  }
  const record = item as Record<string, unknown>
  const id = record.item_raw_id
  if (typeof id !== 'string' || id.length === 0) {
    throw new Error(`line ${line}: item_raw_id must be a non-empty string`)
  }
  for (const key of [...TEXT_FIELDS, 'image']) {
    const value = record[key]
    if (value !== undefined && typeof value !== 'string') {
      throw new Error(`line ${line}: field ${key} must be a string`)
    }
  }
  const parsed = record as unknown as ItemMetadata
  if (combinedText(parsed).length === 0 && !parsed.image) {
    throw new Error(`line ${line}: item ${id} has no text fields and no image`)
  }
  return parsed
}

/** Parse a JSON-lines metadata file, one item per line.  Duplicate ids are
 *  rejected: row order in the output must be unambiguous. */
export async function readMetadata(path: string): Promise<ItemMetadata[]> {
  const text = await fs.readFile(path, 'utf-8')
  const items: ItemMetadata[] = []
  const seen = new Set<string>()
  let lineNo = 0
  for (const line of text.split('\n')) {
    lineNo++
    if (line.trim().length === 0) continue
    let doc: unknown
    try {
      doc = JSON.parse(line)
    } catch {
      throw new Error(`line ${lineNo}: invalid JSON`)
    }
    const item = validateItem(doc, lineNo)
    if (seen.has(item.item_raw_id)) {
      throw new Error(`line ${lineNo}: duplicate item id ${item.item_raw_id}`)
    }
    seen.add(item.item_raw_id)
    items.push(item)
  }
  if (items.length === 0) {
    throw new Error(`${path}: no metadata records`)
  }
  return items
}
