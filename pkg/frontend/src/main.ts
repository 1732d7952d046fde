import { ApiClient } from './api.js'
import { AnnotationSession } from './ui.js'

// Config: service base URL and annotator id, from the query string with
// localStorage fallback (?annotator=ann1&base=http://host:port).
function config(): { baseUrl: string; annotatorId: string } {
  const params = new URLSearchParams(window.location.search)
  const baseUrl = params.get('base') ?? localStorage.getItem('base') ?? window.location.origin
  let annotatorId = params.get('annotator') ?? localStorage.getItem('annotator') ?? ''
  if (!annotatorId) {
    annotatorId = window.prompt('annotator id:') ?? ''
  }
  localStorage.setItem('base', baseUrl)
  localStorage.setItem('annotator', annotatorId)
  return { baseUrl, annotatorId }
}

function element<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id)
  if (!found) throw new Error(`missing element #${id}`)
  return found as T
}

async function boot(): Promise<void> {
  const { baseUrl, annotatorId } = config()
  element('annotator-label').textContent = annotatorId
  const session = new AnnotationSession(new ApiClient(baseUrl), annotatorId, {
    entryText: element('entry-text'),
    entryQuestion: element('entry-question'),
    purposeList: element('purpose-list'),
    submitButton: element<HTMLButtonElement>('submit'),
    notice: element('notice'),
    dashboard: element('dashboard'),
    done: element('done'),
  })
  element('entry-yes').addEventListener('click', () => session.answer(true))
  element('entry-no').addEventListener('click', () => session.answer(false))
  element('submit').addEventListener('click', () => void session.submit())
  await session.start()
}

void boot()
