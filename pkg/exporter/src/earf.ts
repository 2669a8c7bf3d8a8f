/**
 * EARF feature container (binary, little-endian).
 *
 * Layout: magic "EARF" | version u16 | sample_count u64 | tap_count u16 |
 * tap_dims u32[tap_count] | num_classes u32 | labels u32[n] |
 * domain_ids u32[n] | payload f32 (per sample, taps concatenated).
 */

export const EARF_MAGIC = 'EARF'
export const EARF_VERSION = 1

export interface EarfDataset {
  tapDims: number[]
  numClasses: number
  labels: number[]
  domainIds: number[]
  /** one Float32Array per tap, sample-major: taps[t][i * dim + j] */
  taps: Float32Array[]
}

export function sampleCount(ds: EarfDataset): number {
  return ds.labels.length
}

export function encodeEarf(ds: EarfDataset): Buffer {
  const n = ds.labels.length
  const tapCount = ds.tapDims.length
  if (ds.domainIds.length !== n) {
    throw new Error('labels and domainIds must have equal length')
  }
  ds.taps.forEach((tap, t) => {
    if (tap.length !== n * ds.tapDims[t]) {
      throw new Error(`tap ${t}: expected ${n * ds.tapDims[t]} floats, got ${tap.length}`)
    }
  })
  for (const label of ds.labels) {
    if (label < 0 || label >= ds.numClasses) {
      throw new Error(`label ${label} outside [0, ${ds.numClasses})`)
    }
  }

  const totalDim = ds.tapDims.reduce((a, b) => a + b, 0)
  const headerBytes = 4 + 2 + 8 + 2 + 4 * tapCount + 4
  const buf = Buffer.alloc(headerBytes + 8 * n + 4 * n * totalDim)
  let off = 0
  buf.write(EARF_MAGIC, off, 'ascii'); off += 4
  off = buf.writeUInt16LE(EARF_VERSION, off)
  off = buf.writeBigUInt64LE(BigInt(n), off)
  off = buf.writeUInt16LE(tapCount, off)
  for (const dim of ds.tapDims) off = buf.writeUInt32LE(dim, off)
  off = buf.writeUInt32LE(ds.numClasses, off)
  for (const label of ds.labels) off = buf.writeUInt32LE(label, off)
  for (const dom of ds.domainIds) off = buf.writeUInt32LE(dom, off)
  for (let i = 0; i < n; i++) {
    for (let t = 0; t < tapCount; t++) {
      const dim = ds.tapDims[t]
      for (let j = 0; j < dim; j++) {
        off = buf.writeFloatLE(ds.taps[t][i * dim + j], off)
      }
    }
  }
  return buf
}

/** Parse an EARF buffer; used for round-trip validation of our own output. */
export function decodeEarf(buf: Buffer): EarfDataset {
  if (buf.length < 4 || buf.toString('ascii', 0, 4) !== EARF_MAGIC) {
    throw new Error('not an EARF file (bad magic)')
  }
  let off = 4
  const version = buf.readUInt16LE(off); off += 2
  if (version !== EARF_VERSION) throw new Error(`unsupported EARF version ${version}`)
  const n = Number(buf.readBigUInt64LE(off)); off += 8
  const tapCount = buf.readUInt16LE(off); off += 2
  const tapDims: number[] = []
  for (let t = 0; t < tapCount; t++) { tapDims.push(buf.readUInt32LE(off)); off += 4 }
  const numClasses = buf.readUInt32LE(off); off += 4
  const totalDim = tapDims.reduce((a, b) => a + b, 0)
  const expected = off + 8 * n + 4 * n * totalDim
  if (buf.length < expected) {
    throw new Error(`truncated EARF payload (${buf.length} < ${expected} bytes)`)
  }
  const labels: number[] = []
  for (let i = 0; i < n; i++) { labels.push(buf.readUInt32LE(off)); off += 4 }
  const domainIds: number[] = []
  for (let i = 0; i < n; i++) { domainIds.push(buf.readUInt32LE(off)); off += 4 }
  const taps = tapDims.map(dim => new Float32Array(n * dim))
  for (let i = 0; i < n; i++) {
    for (let t = 0; t < tapCount; t++) {
      const dim = tapDims[t]
      for (let j = 0; j < dim; j++) {
        taps[t][i * dim + j] = buf.readFloatLE(off); off += 4
      }
    }
  }
  return { tapDims, numClasses, labels, domainIds, taps }
}
