import { promises as fs } from 'node:fs'

/** Binary feature matrix: 4-byte magic "IDSF", then version / rows / dim as
 *  little-endian uint32, then rows*dim float32 values, row-major.  Row ids
 *  live in a sidecar at `<path>.ids`, one raw id per line, same order. */

export const MAGIC = 'IDSF'
export const FORMAT_VERSION = 1
const HEADER_BYTES = 16

export interface FeatureMatrix {
  rows: number
  dim: number
  values: Float32Array // row-major, rows*dim
  rowIds: string[]
}

export async function writeFeatureFile(
  path: string,
  matrix: FeatureMatrix,
): Promise<void> {
  const { rows, dim, values, rowIds } = matrix
  if (values.length !== rows * dim) {
    throw new Error(`payload length ${values.length} != rows*dim ${rows * dim}`)
  }
  if (rowIds.length !== rows) {
    throw new Error(`${rowIds.length} row ids for ${rows} rows`)
  }
  const buf = Buffer.alloc(HEADER_BYTES + rows * dim * 4)
  buf.write(MAGIC, 0, 'ascii')
  buf.writeUInt32LE(FORMAT_VERSION, 4)
  buf.writeUInt32LE(rows, 8)
  buf.writeUInt32LE(dim, 12)
  for (let k = 0; k < values.length; k++) {
    buf.writeFloatLE(values[k], HEADER_BYTES + 4 * k)
  }
  await fs.writeFile(path, buf)
  await fs.writeFile(path + '.ids', rowIds.map((id) => id + '\n').join(''))
}

export async function readFeatureFile(path: string): Promise<FeatureMatrix> {
  const buf = await fs.readFile(path)
  if (buf.length < HEADER_BYTES || buf.toString('ascii', 0, 4) !== MAGIC) {
    throw new Error(`${path}: bad magic bytes`)
  }
  const version = buf.readUInt32LE(4)
  if (version !== FORMAT_VERSION) {
    throw new Error(`${path}: unsupported format version ${version}`)
  }
  const rows = buf.readUInt32LE(8)
  const dim = buf.readUInt32LE(12)
  if (buf.length !== HEADER_BYTES + rows * dim * 4) {
    throw new Error(`${path}: payload size does not match rows*dim*4`)
  }
  const values = new Float32Array(rows * dim)
  for (let k = 0; k < values.length; k++) {
    values[k] = buf.readFloatLE(HEADER_BYTES + 4 * k)
  }
  const sidecar = await fs.readFile(path + '.ids', 'utf-8')
  const rowIds = sidecar.split('\n').filter((line) => line.length > 0)
  if (rowIds.length !== rows) {
    throw new Error(`${path}.ids: ${rowIds.length} ids for ${rows} rows`)
  }
  return { rows, dim, values, rowIds }
}
