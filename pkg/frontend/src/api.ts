import type { Agreement, Progress, TaskPayload, VoteAck, VoteBody } from './types.js'

export class ConflictError extends Error {}
export class ValidationError extends Error {}
export class AuthError extends Error {}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>

/** Thin typed client over the four service endpoints. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, '') + path
  }

  /** Next open task for the annotator, or null when the queue is exhausted. */
  async nextTask(annotatorId: string): Promise<TaskPayload | null> {
    const response = await this.fetchFn(
      this.url(`/api/tasks/next?annotator=${encodeURIComponent(annotatorId)}`),
    )
    if (response.status === 204) return null
    if (response.status === 403) throw new AuthError(await errorText(response))
    if (!response.ok) throw new Error(`tasks/next failed: HTTP ${response.status}`)
    return (await response.json()) as TaskPayload
  }

  async submitVote(body: VoteBody): Promise<VoteAck> {
    const response = await this.fetchFn(this.url('/api/votes'), {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    })
    if (response.status === 409) throw new ConflictError(await errorText(response))
    if (response.status === 422) throw new ValidationError(await errorText(response))
    if (response.status === 403) throw new AuthError(await errorText(response))
    if (!response.ok) throw new Error(`votes failed: HTTP ${response.status}`)
    return (await response.json()) as VoteAck
  }

  async progress(): Promise<Progress> {
    const response = await this.fetchFn(this.url('/api/progress'))
    if (!response.ok) throw new Error(`progress failed: HTTP ${response.status}`)
    return (await response.json()) as Progress
  }

  async agreement(question: 'entry' | 'purpose'): Promise<Agreement> {
    const response = await this.fetchFn(this.url(`/api/agreement?question=${question}`))
    if (!response.ok) throw new Error(`agreement failed: HTTP ${response.status}`)
    return (await response.json()) as Agreement
  }
}

async function errorText(response: Response): Promise<string> {
  try {
    const payload = (await response.json()) as { error?: string }
    return payload.error ?? `HTTP ${response.status}`
  } catch {
    return `HTTP ${response.status}`
  }
}
