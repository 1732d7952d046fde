import type { ApiClient } from './api.js'
import type { Agreement, Progress } from './types.js'

export interface DashboardModel {
  tasksTotal: number
  tasksComplete: number
  tasksOpen: number
  votesTotal: number
  perAnnotator: Record<string, number>
  agreementLabel: string
}

/** Alpha formatted for display; an undefined alpha is a normal state, not an
 *  error. */
export function formatAgreement(agreement: Agreement): string {
  if (agreement.alpha === null) return 'insufficient data'
  return agreement.alpha.toFixed(2)
}

export function dashboardModel(progress: Progress, agreement: Agreement): DashboardModel {
  return {
    tasksTotal: progress.tasks_total,
    tasksComplete: progress.tasks_complete,
    tasksOpen: progress.tasks_open,
    votesTotal: progress.votes_total,
    perAnnotator: progress.per_annotator,
    agreementLabel: formatAgreement(agreement),
  }
}

export async function loadDashboard(client: ApiClient): Promise<DashboardModel> {
  const [progress, agreement] = await Promise.all([client.progress(), client.agreement('entry')])
  return dashboardModel(progress, agreement)
}
