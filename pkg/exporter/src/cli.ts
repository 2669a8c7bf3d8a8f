#!/usr/bin/env node
/**
 * earf-export: run a frozen backbone over an image folder and write
 * pooled multi-tap features as an EARF file (plus a JSON manifest).
 *
 * Usage:
 *   earf-export export --images DIR --backbone ID --taps a,b,c --out FILE
 *                      [--split-seed N] [--split-fraction F] [--domain-id N]
 */

import { exportFeatures } from './export'
import { loadBackbone } from './backbone'

interface Args {
  [key: string]: string
}

function parseArgs(argv: string[]): { command: string; args: Args } {
  if (argv.length === 0) throw new Error('missing command (expected "export")')
  const [command, ...rest] = argv
  const args: Args = {}
  for (let i = 0; i < rest.length; i += 2) {
    const key = rest[i]
    if (!key.startsWith('--') || i + 1 >= rest.length) {
      throw new Error(`malformed argument ${key}`)
    }
    args[key.slice(2)] = rest[i + 1]
  }
  return { command, args }
}

function require_(args: Args, key: string): string {
  const value = args[key]
  if (value === undefined) throw new Error(`missing --${key}`)
  return value
}

export function main(argv: string[]): number {
  try {
    const { command, args } = parseArgs(argv)
    if (command !== 'export') throw new Error(`unknown command "${command}"`)
    const backboneId = args.backbone ?? 'rand-cnn-v1'
    const taps = args.taps
      ? args.taps.split(',').map(t => t.trim()).filter(Boolean)
      : loadBackbone(backboneId).tapNames
    const result = exportFeatures({
      imagesDir: require_(args, 'images'),
      backboneId,
      taps,
      outFile: require_(args, 'out'),
      splitSeed: args['split-seed'] !== undefined ? Number(args['split-seed']) : undefined,
      splitFraction: args['split-fraction'] !== undefined
        ? Number(args['split-fraction']) : undefined,
      domainId: args['domain-id'] !== undefined ? Number(args['domain-id']) : undefined,
      datasetName: args.dataset,
      log: msg => console.error(msg),
    })
    console.log(
      `exported ${result.sampleCount} samples (${result.skipped.length} skipped) -> ` +
      result.files.join(', '),
    )
    return 0
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`)
    return 1
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)))
}
