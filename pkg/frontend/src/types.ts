// Wire types of the annotation service REST API.

export interface TaskPurpose {
  extractor_id: string
  index: number
  text: string
}

export interface TaskPayload {
  entry_id: string
  text: string
  purposes: TaskPurpose[]
}

export interface VoteJudgment {
  extractor_id: string
  purpose_index: number
  valid: boolean
}

export interface VoteBody {
  entry_id: string
  annotator_id: string
  has_purpose: boolean
  purpose_judgments: VoteJudgment[] | null
  supersede?: boolean
}

export interface VoteAck {
  accepted: boolean
  seq: number
}

export interface Progress {
  tasks_total: number
  tasks_complete: number
  tasks_open: number
  votes_total: number
  per_annotator: Record<string, number>
}

export interface Agreement {
  question: string
  alpha: number | null
  basis: string
  reason?: string
}
