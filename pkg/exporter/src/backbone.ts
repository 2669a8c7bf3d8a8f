/**
 * Frozen convolutional backbones with named tap points.
 *
 * Every tap output is global-average-pooled to a fixed-length vector, so
 * downstream consumers only ever see pooled features. Weights are never
 * updated here.
 *
 * The registry ships "rand-cnn-v1", a seeded frozen random CNN: this
 * sandbox cannot download pretrained weights, and a frozen random stack
 * preserves the one property the pipeline needs (a fixed, deterministic
 * multi-tap feature extractor). A pretrained tfjs GraphModel can be added
 * as another registry entry where weights are available locally.
 */

import * as tf from '@tensorflow/tfjs'
import { mulberry32, normalArray } from './prng'

export interface Backbone {
  id: string
  inputSize: number
  tapNames: string[]
  tapDims: Record<string, number>
  /** images: (n, size, size, 3) in [0,1]; returns pooled (n, dim) per tap */
  extract(images: tf.Tensor4D, taps: string[]): Record<string, Float32Array[]>
  dispose(): void
}

const RAND_CNN_CHANNELS = [8, 12, 16, 20, 24, 28]
const RAND_CNN_HEAD = 32
const RAND_CNN_SEED = 1001

class RandCnn implements Backbone {
  id = 'rand-cnn-v1'
  inputSize = 32
  tapNames: string[]
  tapDims: Record<string, number> = {}
  private kernels: tf.Tensor4D[] = []
  private headWeights: tf.Tensor2D

  constructor() {
    const rng = mulberry32(RAND_CNN_SEED)
    let cin = 3
    RAND_CNN_CHANNELS.forEach((cout, i) => {
      const std = Math.sqrt(2.0 / (3 * 3 * cin))
      this.kernels.push(
        tf.tensor4d(normalArray(3 * 3 * cin * cout, std, rng), [3, 3, cin, cout]),
      )
      this.tapDims[`block${i + 1}`] = cout
      cin = cout
    })
    const headStd = Math.sqrt(2.0 / cin)
    this.headWeights = tf.tensor2d(
      normalArray(cin * RAND_CNN_HEAD, headStd, rng), [cin, RAND_CNN_HEAD],
    )
    this.tapDims.head = RAND_CNN_HEAD
    this.tapNames = [...RAND_CNN_CHANNELS.map((_, i) => `block${i + 1}`), 'head']
  }

  extract(images: tf.Tensor4D, taps: string[]): Record<string, Float32Array[]> {
    const wanted = new Set(taps)
    const out: Record<string, Float32Array[]> = {}
    tf.tidy(() => {
      let x: tf.Tensor4D = tf.sub(images, 0.5).mul(2.0) as tf.Tensor4D
      RAND_CNN_CHANNELS.forEach((_, i) => {
        x = tf.relu(tf.conv2d(x, this.kernels[i], 1, 'same'))
        const name = `block${i + 1}`
        if (wanted.has(name)) {
          out[name] = pooledRows(tf.mean(x, [1, 2]) as tf.Tensor2D)
        }
        if (x.shape[1] > 1) {
          x = tf.avgPool(x, 2, 2, 'same')
        }
      })
      if (wanted.has('head')) {
        const gap = tf.mean(x, [1, 2]) as tf.Tensor2D
        const head = tf.relu(tf.matMul(gap, this.headWeights)) as tf.Tensor2D
        out.head = pooledRows(head)
      }
    })
    return out
  }

  dispose() {
    this.kernels.forEach(k => k.dispose())
    this.headWeights.dispose()
  }
}

function pooledRows(pooled: tf.Tensor2D): Float32Array[] {
  const [n, dim] = pooled.shape
  const flat = pooled.dataSync() as Float32Array
  const rows: Float32Array[] = []
  for (let i = 0; i < n; i++) rows.push(flat.slice(i * dim, (i + 1) * dim))
  return rows
}

const REGISTRY: Record<string, () => Backbone> = {
  'rand-cnn-v1': () => new RandCnn(),
}

export function loadBackbone(id: string): Backbone {
  const make = REGISTRY[id]
  if (!make) {
    throw new Error(
      `unknown backbone "${id}" (known: ${Object.keys(REGISTRY).join(', ')})`,
    )
  }
  return make()
}
