import { ApiClient, ConflictError, ValidationError } from './api.js'
import { loadDashboard } from './dashboard.js'
import { IncompleteVoteError, TaskFlow } from './taskFlow.js'

interface Elements {
  entryText: HTMLElement
  entryQuestion: HTMLElement
  purposeList: HTMLElement
  submitButton: HTMLButtonElement
  notice: HTMLElement
  dashboard: HTMLElement
  done: HTMLElement
}

/**
 * Annotation session: fetch task, capture the entry-level answer, reveal and
 * judge purposes only after a "yes", submit, advance. Keyboard-first:
 * y/n answer the current question, Enter submits.
 */
export class AnnotationSession {
  private flow: TaskFlow | null = null

  constructor(
    private readonly client: ApiClient,
    private readonly annotatorId: string,
    private readonly el: Elements,
  ) {}

  async start(): Promise<void> {
    document.addEventListener('keydown', (event) => this.onKey(event))
    await this.refreshDashboard()
    await this.advance()
  }

  private async advance(): Promise<void> {
    const task = await this.client.nextTask(this.annotatorId)
    if (task === null) {
      this.flow = null
      this.el.done.hidden = false
      this.el.entryText.textContent = ''
      this.el.entryQuestion.hidden = true
      this.render()
      return
    }
    this.flow = new TaskFlow(task, this.annotatorId)
    this.el.done.hidden = true
    this.el.entryQuestion.hidden = false
    this.el.entryText.textContent = task.text
    this.setNotice('')
    this.render()
  }

  private onKey(event: KeyboardEvent): void {
    if (this.flow === null) return
    const key = event.key.toLowerCase()
    if (key === 'y' || key === 'n') {
      this.answer(key === 'y')
      event.preventDefault()
    } else if (key === 'enter') {
      void this.submit()
      event.preventDefault()
    }
  }

  answer(value: boolean): void {
    if (this.flow === null) return
    const target = this.flow.nextQuestion()
    if (target === 'entry') {
      this.flow.answerEntry(value)
    } else if (typeof target === 'number') {
      this.flow.judgePurpose(target, value)
    }
    this.render()
  }

  async submit(): Promise<void> {
    if (this.flow === null) return
    if (!this.flow.isComplete()) {
      // client-side block: mirror the blockers inline, submit nothing
      this.render()
      this.setNotice(this.flow.blockers().join('; '))
      return
    }
    try {
      await this.client.submitVote(this.flow.buildVote())
    } catch (error) {
      if (error instanceof ConflictError) {
        this.setNotice('vote already recorded elsewhere; skipping to the next task')
        await this.advance()
        return
      }
      if (error instanceof ValidationError || error instanceof IncompleteVoteError) {
        this.setNotice(`rejected: ${error.message}`)
        return
      }
      throw error
    }
    await this.refreshDashboard()
    await this.advance()
  }

  private render(): void {
    const flow = this.flow
    this.el.purposeList.replaceChildren()
    if (flow === null) return

    const answer = flow.entryAnswer
    this.el.entryQuestion.dataset.answer = answer

    for (const purpose of flow.visiblePurposes()) {
      const row = document.createElement('li')
      row.className = 'purpose'
      const text = document.createElement('span')
      text.textContent = purpose.text
      const state = document.createElement('span')
      state.className = 'judgment'
      state.textContent = purpose.valid === null ? '—' : purpose.valid ? 'valid' : 'invalid'
      const yes = judgeButton('y', () => {
        flow.judgePurpose(purpose.position, true)
        this.render()
      })
      const no = judgeButton('n', () => {
        flow.judgePurpose(purpose.position, false)
        this.render()
      })
      row.append(text, yes, no, state)
      if (flow.nextQuestion() === purpose.position) row.classList.add('current')
      this.el.purposeList.append(row)
    }
    this.el.submitButton.disabled = !flow.isComplete()
  }

  private setNotice(message: string): void {
    this.el.notice.textContent = message
    this.el.notice.hidden = message === ''
  }

  private async refreshDashboard(): Promise<void> {
    const model = await loadDashboard(this.client)
    const mine = model.perAnnotator[this.annotatorId] ?? 0
    this.el.dashboard.textContent =
      `${model.tasksComplete}/${model.tasksTotal} tasks complete · ` +
      `${model.tasksOpen} open · you voted ${mine} · agreement ${model.agreementLabel}`
  }
}

function judgeButton(label: string, onClick: () => void): HTMLButtonElement {
  const button = document.createElement('button')
  button.type = 'button'
  button.textContent = label
  button.addEventListener('click', onClick)
  return button
}
