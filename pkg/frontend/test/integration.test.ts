// Full-stack pass: spawn the real annotation service over the bundled demo
// tasks, drive three annotators through the UI flow (ApiClient + TaskFlow),
// verify server-side gating, and confirm the aggregate command accepts the
// produced vote log with zero validation errors.

import { spawn, spawnSync, type ChildProcess } from 'node:child_process'
import { mkdtempSync, rmSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { join } from 'node:path'
import { afterAll, beforeAll, describe, expect, it } from 'vitest'

import { ApiClient, ValidationError } from '../src/api.js'
import { TaskFlow } from '../src/taskFlow.js'

const PORT = 8755
const BASE = `http://127.0.0.1:${PORT}`
const ANNOTATORS = ['ui1', 'ui2', 'ui3']

let workDir: string
let server: ChildProcess | null = null

function cli(args: string[], timeoutMs = 120_000) {
  return spawnSync('python3', ['-m', 'diarist.cli', ...args], {
    encoding: 'utf-8',
    timeout: timeoutMs,
  })
}

async function waitForServer(client: ApiClient): Promise<void> {
  for (let attempt = 0; attempt < 100; attempt++) {
    try {
      await client.progress()
      return
    } catch {
      await new Promise((resolve) => setTimeout(resolve, 150))
    }
  }
  throw new Error('annotation service did not come up')
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), 'annotation-ui-'))
  const demo = cli(['demo', '--out', join(workDir, 'demo')])
  expect(demo.status).toBe(0)

  server = spawn(
    'python3',
    [
      '-m', 'diarist.cli', 'annotate-serve',
      '--tasks', join(workDir, 'demo', 'union.jsonl'),
      '--log', join(workDir, 'votes.jsonl'),
      '--port', String(PORT),
      '--annotators', ANNOTATORS.join(','),
    ],
    { stdio: 'ignore' },
  )
  await waitForServer(new ApiClient(BASE))
}, 60_000)

afterAll(() => {
  server?.kill()
  rmSync(workDir, { recursive: true, force: true })
})

describe('annotation UI against the live service', () => {
  it('server rejects a gating-violating vote the client would never build', async () => {
    const raw = await fetch(`${BASE}/api/votes`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({
        entry_id: 'e03',
        annotator_id: 'ui1',
        has_purpose: false,
        // judgments alongside a "no": impossible through TaskFlow
        purpose_judgments: [{ extractor_id: 'alpha', purpose_index: 0, valid: true }],
      }),
    })
    expect(raw.status).toBe(422)

    const client = new ApiClient(BASE)
    await expect(
      client.submitVote({
        entry_id: 'e03',
        annotator_id: 'ui1',
        has_purpose: true,
        purpose_judgments: [], // yes with unjudged purposes: also impossible client-side
      }),
    ).rejects.toThrow(ValidationError)
  })

  it(
    'three full annotator passes produce a log the aggregate command accepts',
    async () => {
      for (const annotator of ANNOTATORS) {
        const client = new ApiClient(BASE)
        let voted = 0
        for (;;) {
          const task = await client.nextTask(annotator)
          if (task === null) break
          const flow = new TaskFlow(task, annotator)
          expect(flow.visiblePurposes()).toEqual([]) // hidden pre-answer
          const hasPurpose = task.text.includes('чтобы') || task.text.includes('цель')
          flow.answerEntry(hasPurpose)
          if (hasPurpose) {
            for (const purpose of flow.visiblePurposes()) {
              flow.judgePurpose(purpose.position, !purpose.text.includes('опаздывать'))
            }
          }
          expect(flow.isComplete()).toBe(true)
          await client.submitVote(flow.buildVote())
          voted += 1
        }
        expect(voted).toBeGreaterThan(0)
      }

      const progress = await new ApiClient(BASE).progress()
      expect(progress.tasks_complete).toBe(progress.tasks_total)
      const agreement = await new ApiClient(BASE).agreement('entry')
      expect(agreement.alpha).not.toBeNull()

      const aggregate = cli([
        'aggregate',
        '--log', join(workDir, 'votes.jsonl'),
        '--out', join(workDir, 'gold.json'),
        '--tasks', join(workDir, 'demo', 'union.jsonl'),
      ])
      expect(aggregate.stderr).toBe('')
      expect(aggregate.status).toBe(0)
      const summary = JSON.parse(aggregate.stdout)
      expect(summary.correct_entries).toBeGreaterThan(0)
    },
    120_000,
  )
})
