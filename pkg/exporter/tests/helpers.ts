/** Test fixtures: deterministic rendered PNG image folders. */

import * as fs from 'fs'
import * as path from 'path'
import { PNG } from 'pngjs'
import { Rng, mulberry32 } from '../src/prng'

const CLASSES = ['circle', 'square', 'stripes']

function renderImage(classIndex: number, size: number, rng: Rng,
                     inverted = false): Buffer {
  const png = new PNG({ width: size, height: size })
  const base = [60 + classIndex * 50, 90, 200 - classIndex * 40]
  const cx = size / 2 + (rng() - 0.5) * 4
  const cy = size / 2 + (rng() - 0.5) * 4
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      let inside = false
      if (classIndex === 0) {
        inside = (x - cx) ** 2 + (y - cy) ** 2 < (size / 3.2) ** 2
      } else if (classIndex === 1) {
        inside = Math.abs(x - cx) < size / 3.5 && Math.abs(y - cy) < size / 3.5
      } else {
        inside = Math.floor((x + y) / 4) % 2 === 0
      }
      const p = (y * size + x) * 4
      for (let c = 0; c < 3; c++) {
        let value = inside ? base[c] : 235
        if (inverted) value = 255 - value
        png.data[p + c] = Math.max(0, Math.min(255, value + (rng() - 0.5) * 30))
      }
      png.data[p + 3] = 255
    }
  }
  return PNG.sync.write(png)
}

export interface FixtureOptions {
  perClass?: number
  withOddSize?: boolean
  withCorrupt?: boolean
  /** render a shifted palette, acting as a second visual domain */
  inverted?: boolean
}

/** Writes CLASSES subfolders of rendered PNGs; returns the root. */
export function makeImageFolder(root: string, opts: FixtureOptions = {}): string {
  const perClass = opts.perClass ?? 20
  const rng = mulberry32(opts.inverted ? 9911 : 4242)
  fs.mkdirSync(root, { recursive: true })
  CLASSES.forEach((name, classIndex) => {
    const dir = path.join(root, name)
    fs.mkdirSync(dir, { recursive: true })
    for (let i = 0; i < perClass; i++) {
      fs.writeFileSync(path.join(dir, `img${String(i).padStart(3, '0')}.png`),
                       renderImage(classIndex, 32, rng, opts.inverted ?? false))
    }
  })
  if (opts.withOddSize) {
    fs.writeFileSync(path.join(root, CLASSES[0], 'odd.png'),
                     renderImage(0, 48, rng))
  }
  if (opts.withCorrupt) {
    fs.writeFileSync(path.join(root, CLASSES[1], 'broken.png'),
                     Buffer.from('this is not a png'))
  }
  return root
}

export const FIXTURE_CLASSES = CLASSES
