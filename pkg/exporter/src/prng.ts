/** Small deterministic PRNG so backbone weights and splits replay exactly. */

export type Rng = () => number

/** mulberry32: fast 32-bit generator, uniform in [0, 1). */
export function mulberry32(seed: number): Rng {
  let state = seed >>> 0
  return () => {
    state = (state + 0x6d2b79f5) >>> 0
    let t = state
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

/** Standard normal draws via Box-Muller. */
export function gaussian(rng: Rng): () => number {
  let spare: number | null = null
  return () => {
    if (spare !== null) {
      const v = spare
      spare = null
      return v
    }
    let u = 0
    while (u === 0) u = rng()
    const v = rng()
    const mag = Math.sqrt(-2.0 * Math.log(u))
    spare = mag * Math.sin(2.0 * Math.PI * v)
    return mag * Math.cos(2.0 * Math.PI * v)
  }
}

export function normalArray(length: number, std: number, rng: Rng): Float32Array {
  const draw = gaussian(rng)
  const out = new Float32Array(length)
  for (let i = 0; i < length; i++) out[i] = draw() * std
  return out
}

/** Fisher-Yates shuffle of 0..n-1. */
export function shuffledIndices(n: number, rng: Rng): number[] {
  const idx = Array.from({ length: n }, (_, i) => i)
  for (let i = n - 1; i > 0; i--) {
    const j = Math.floor(rng() * (i + 1))
    ;[idx[i], idx[j]] = [idx[j], idx[i]]
  }
  return idx
}
