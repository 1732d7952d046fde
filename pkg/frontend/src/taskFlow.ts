import type { TaskPayload, VoteBody, VoteJudgment } from './types.js'

export class GatingError extends Error {}
export class IncompleteVoteError extends Error {}

export type EntryAnswer = 'unanswered' | 'yes' | 'no'

export interface PurposeQuestion {
  /** Position in the displayed (interleaved) order. */
  position: number
  text: string
  valid: boolean | null
}

/**
 * State of one annotation task in the form.
 *
 * Encodes the gating contract: purpose questions do not exist for rendering
 * or answering until the entry-level answer is "yes", and a vote cannot be
 * built while any shown purpose is unjudged. These rules are a strict subset
 * of the server's validation, so nothing the flow submits can be rejected
 * for gating reasons.
 */
export class TaskFlow {
  readonly task: TaskPayload
  private readonly annotatorId: string
  private readonly order: number[] // display position -> index into task.purposes
  private answer: EntryAnswer = 'unanswered'
  private judgments: (boolean | null)[]

  constructor(task: TaskPayload, annotatorId: string) {
    this.task = task
    this.annotatorId = annotatorId
    // Interleave purposes from different extractors without revealing which
    // extractor produced what: deterministic order by text, then stable key.
    this.order = task.purposes
      .map((purpose, i) => i)
      .sort((a, b) => {
        const pa = task.purposes[a]!
        const pb = task.purposes[b]!
        return (
          pa.text.localeCompare(pb.text) ||
          pa.extractor_id.localeCompare(pb.extractor_id) ||
          pa.index - pb.index
        )
      })
    this.judgments = task.purposes.map(() => null)
  }

  get entryAnswer(): EntryAnswer {
    return this.answer
  }

  answerEntry(hasPurpose: boolean): void {
    this.answer = hasPurpose ? 'yes' : 'no'
    if (!hasPurpose) {
      // judgments cannot survive a "no"
      this.judgments = this.task.purposes.map(() => null)
    }
  }

  /** Purposes are renderable only after an entry-level "yes"; extractor
   *  identity is deliberately absent from the view. */
  visiblePurposes(): PurposeQuestion[] {
    if (this.answer !== 'yes') return []
    return this.order.map((purposeIndex, position) => ({
      position,
      text: this.task.purposes[purposeIndex]!.text,
      valid: this.judgments[purposeIndex] ?? null,
    }))
  }

  judgePurpose(position: number, valid: boolean): void {
    if (this.answer !== 'yes') {
      throw new GatingError('purposes are not judgeable before an entry-level yes')
    }
    const purposeIndex = this.order[position]
    if (purposeIndex === undefined) {
      throw new RangeError(`no purpose at position ${position}`)
    }
    this.judgments[purposeIndex] = valid
  }

  /** The question the keyboard targets next: the entry question, a purpose
   *  position, or the submit action when everything is answered. */
  nextQuestion(): 'entry' | number | 'submit' {
    if (this.answer === 'unanswered') return 'entry'
    if (this.answer === 'yes') {
      const pending = this.visiblePurposes().find((p) => p.valid === null)
      if (pending) return pending.position
    }
    return 'submit'
  }

  blockers(): string[] {
    if (this.answer === 'unanswered') return ['answer the entry-level question']
    if (this.answer === 'yes') {
      const unjudged = this.visiblePurposes().filter((p) => p.valid === null)
      if (unjudged.length > 0) {
        return unjudged.map((p) => `purpose ${p.position + 1} is unjudged`)
      }
    }
    return []
  }

  isComplete(): boolean {
    return this.blockers().length === 0
  }

  buildVote(): VoteBody {
    const blockers = this.blockers()
    if (blockers.length > 0) {
      throw new IncompleteVoteError(blockers.join('; '))
    }
    let judgments: VoteJudgment[] | null = null
    if (this.answer === 'yes') {
      judgments = this.task.purposes.map((purpose, i) => ({
        extractor_id: purpose.extractor_id,
        purpose_index: purpose.index,
        valid: this.judgments[i] === true,
      }))
    }
    return {
      entry_id: this.task.entry_id,
      annotator_id: this.annotatorId,
      has_purpose: this.answer === 'yes',
      purpose_judgments: judgments,
    }
  }
}
