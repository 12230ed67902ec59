// Browser entry point: checklist, pilot with gate loop, then formal sessions.

import { RatingApi } from './api'
import { SessionFlow } from './flow'
import { DomRaterView } from './ui'

const params = new URLSearchParams(window.location.search)
const raterId = params.get('rater') ?? `rater-${Math.random().toString(36).slice(2, 8)}`
const baseUrl = params.get('service') ?? ''

const root = document.getElementById('app')!
const api = new RatingApi(baseUrl)
const view = new DomRaterView(root, api)
const flow = new SessionFlow(api, view)

view.mountChecklist(async () => {
  const gate = await flow.runPilotUntilPass(raterId)
  if (!gate.pass) return
  const summary = await flow.runFormal(raterId)
  view.showComplete(summary.status)
})
