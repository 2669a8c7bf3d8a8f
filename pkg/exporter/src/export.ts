/** Export orchestration: walk a class folder, run the frozen backbone,
 * pool each tap, and write EARF plus a JSON manifest. */

import * as fs from 'fs'
import * as path from 'path'
import * as tf from '@tensorflow/tfjs'
import { loadBackbone } from './backbone'
import { EarfDataset, encodeEarf } from './earf'
import { decodeImage, listImageFolder, toBatch } from './images'
import { mulberry32, shuffledIndices } from './prng'

const BATCH_SIZE = 16
const MANIFEST_SCHEMA_VERSION = 1

export interface ExportOptions {
  imagesDir: string
  backboneId: string
  taps: string[]
  outFile: string
  splitSeed?: number
  splitFraction?: number
  domainId?: number
  datasetName?: string
  log?: (msg: string) => void
}

export interface ExportResult {
  files: string[]
  manifestFile: string
  sampleCount: number
  skipped: string[]
}

export function exportFeatures(opts: ExportOptions): ExportResult {
  const log = opts.log ?? (() => {})
  const backbone = loadBackbone(opts.backboneId)
  for (const tap of opts.taps) {
    if (!backbone.tapNames.includes(tap)) {
      backbone.dispose()
      throw new Error(
        `unknown tap "${tap}" for ${backbone.id} (known: ${backbone.tapNames.join(', ')})`,
      )
    }
  }

  const tapDims = opts.taps.map(tap => backbone.tapDims[tap])
  const listing = listImageFolder(opts.imagesDir)
  const skipped: string[] = []
  const labels: number[] = []
  const rows: Float32Array[][] = opts.taps.map(() => [])

  let pending: tf.Tensor3D[] = []
  let pendingLabels: number[] = []
  const flush = () => {
    if (pending.length === 0) return
    const batch = toBatch(pending, backbone.inputSize)
    const pooled = backbone.extract(batch, opts.taps)
    opts.taps.forEach((tap, t) => rows[t].push(...pooled[tap]))
    labels.push(...pendingLabels)
    batch.dispose()
    pending.forEach(img => img.dispose())
    pending = []
    pendingLabels = []
  }

  for (const entry of listing.entries) {
    const img = decodeImage(entry.file)
    if (img === null) {
      skipped.push(entry.file)
      log(`warning: skipping unreadable image ${entry.file}`)
      continue
    }
    pending.push(img)
    pendingLabels.push(entry.classIndex)
    if (pending.length >= BATCH_SIZE) flush()
  }
  flush()
  backbone.dispose()

  if (labels.length === 0) {
    throw new Error(`${opts.imagesDir}: no readable images`)
  }

  const domainId = opts.domainId ?? 0
  const buildDataset = (indices: number[]): EarfDataset => ({
    tapDims,
    numClasses: listing.classNames.length,
    labels: indices.map(i => labels[i]),
    domainIds: indices.map(() => domainId),
    taps: opts.taps.map((_, t) => {
      const dim = tapDims[t]
      const out = new Float32Array(indices.length * dim)
      indices.forEach((src, dst) => out.set(rows[t][src], dst * dim))
      return out
    }),
  })

  const files: string[] = []
  let splitInfo: object | null = null
  if (opts.splitSeed !== undefined) {
    const fraction = opts.splitFraction ?? 0.75
    const order = shuffledIndices(labels.length, mulberry32(opts.splitSeed))
    const cut = Math.round(fraction * labels.length)
    const trainFile = withSuffix(opts.outFile, '_train')
    const testFile = withSuffix(opts.outFile, '_test')
    fs.writeFileSync(trainFile, encodeEarf(buildDataset(order.slice(0, cut))))
    fs.writeFileSync(testFile, encodeEarf(buildDataset(order.slice(cut))))
    files.push(trainFile, testFile)
    splitInfo = { seed: opts.splitSeed, fraction, train: cut, test: labels.length - cut }
  } else {
    const all = Array.from({ length: labels.length }, (_, i) => i)
    fs.writeFileSync(opts.outFile, encodeEarf(buildDataset(all)))
    files.push(opts.outFile)
  }

  const manifestFile = opts.outFile + '.manifest.json'
  const manifest = {
    schema_version: MANIFEST_SCHEMA_VERSION,
    dataset: opts.datasetName ?? path.basename(opts.imagesDir),
    domain: path.basename(opts.imagesDir),
    backbone: opts.backboneId,
    tap_names: opts.taps,
    tap_dims: tapDims,
    num_classes: listing.classNames.length,
    class_names: listing.classNames,
    sample_count: labels.length,
    domain_id: domainId,
    files: files.map(f => path.basename(f)),
    skipped: skipped.map(f => path.basename(f)),
    split: splitInfo,
  }
  fs.writeFileSync(manifestFile, JSON.stringify(manifest, null, 2) + '\n')
  return { files, manifestFile, sampleCount: labels.length, skipped }
}

function withSuffix(file: string, suffix: string): string {
  const ext = path.extname(file)
  return file.slice(0, file.length - ext.length) + suffix + ext
}
