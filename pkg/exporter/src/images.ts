/** Image-folder walking and decoding: one domain folder with one
 * subdirectory per class. Only PNG is decoded; anything unreadable is
 * skipped with a warning so one bad file cannot sink an export. */

import * as fs from 'fs'
import * as path from 'path'
import * as tf from '@tensorflow/tfjs'
import { PNG } from 'pngjs'

export interface ImageEntry {
  file: string
  classIndex: number
  className: string
}

export interface FolderListing {
  classNames: string[]
  entries: ImageEntry[]
}

export function listImageFolder(root: string): FolderListing {
  const classNames = fs.readdirSync(root, { withFileTypes: true })
    .filter(d => d.isDirectory())
    .map(d => d.name)
    .sort()
  if (classNames.length === 0) {
    throw new Error(`${root}: no class subdirectories found`)
  }
  const entries: ImageEntry[] = []
  classNames.forEach((className, classIndex) => {
    const dir = path.join(root, className)
    for (const file of fs.readdirSync(dir).sort()) {
      entries.push({ file: path.join(dir, file), classIndex, className })
    }
  })
  return { classNames, entries }
}

/** Decode one image to a (h, w, 3) tensor in [0, 1]; null if unreadable. */
export function decodeImage(file: string): tf.Tensor3D | null {
  let png: PNG
  try {
    png = PNG.sync.read(fs.readFileSync(file))
  } catch {
    return null
  }
  const { width, height, data } = png
  const rgb = new Float32Array(width * height * 3)
  for (let p = 0; p < width * height; p++) {
    rgb[p * 3] = data[p * 4] / 255
    rgb[p * 3 + 1] = data[p * 4 + 1] / 255
    rgb[p * 3 + 2] = data[p * 4 + 2] / 255
  }
  return tf.tensor3d(rgb, [height, width, 3])
}

/** Stack decoded images, resizing everything to (size, size). */
export function toBatch(images: tf.Tensor3D[], size: number): tf.Tensor4D {
  return tf.tidy(() => {
    const resized = images.map(img =>
      img.shape[0] === size && img.shape[1] === size
        ? img
        : tf.image.resizeBilinear(img, [size, size]),
    )
    return tf.stack(resized) as tf.Tensor4D
  })
}
