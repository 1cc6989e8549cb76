import { createHash } from 'node:crypto'

/** An encoder maps input bytes to a fixed-width float vector.  Encoders are
 *  selected by name on the CLI; the name is recorded in the output metadata
 *  so a run is reproducible.
 *
 *  The built-in `hash-<dim>` family derives each vector deterministically
 *  from a SHA-256 stream over the input.  It carries no semantics, but it
 *  is stable across platforms and exercises the full pipeline without any
 *  pretrained checkpoint on disk.  Real encoders plug in through the same
 *  interface. */
export interface Encoder {
  readonly name: string
  readonly dim: number
  encode(input: Buffer): Float32Array
}

class HashEncoder implements Encoder {
  readonly name: string
  readonly dim: number

  constructor(dim: number) {
    this.name = `hash-${dim}`
    this.dim = dim
  }

  encode(input: Buffer): Float32Array {
    const out = new Float32Array(this.dim)
    let counter = 0
    let filled = 0
    while (filled < this.dim) {
      const digest = createHash('sha256')
        .update(input)
        .update(String(counter++))
        .digest()
      for (let k = 0; k + 4 <= digest.length && filled < this.dim; k += 4) {
        // uint32 -> [-1, 1)
        out[filled++] = digest.readUInt32LE(k) / 2147483648 - 1
      }
    }
    // unit length keeps cosine similarities well-scaled downstream
    let norm = 0
    for (const v of out) norm += v * v
    norm = Math.sqrt(norm)
    for (let k = 0; k < out.length; k++) out[k] = out[k] / norm
    return out
  }
}

export function resolveEncoder(name: string): Encoder {
  const match = /^hash-(\d+)$/.exec(name)
  if (match) {
    const dim = parseInt(match[1], 10)
    if (dim < 1 || dim > 65536) {
      throw new Error(`encoder ${name}: dimension out of range`)
    }
    return new HashEncoder(dim)
  }
  throw new Error(
    `unknown encoder ${name}; built-ins are hash-<dim> (e.g. hash-384)`,
  )
}
