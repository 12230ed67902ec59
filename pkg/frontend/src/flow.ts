// Session flow controller: drives pilot and formal sessions against the
// service. Rendering is behind the RaterView interface so the same flow runs
// under the DOM layer and under scripted raters in tests.

import { ApiError, GateStatus, NextItem, RatingApi, SessionSummary } from './api'
import { RatingFormState } from './state'

export interface RaterView {
  // Show the image and collect all six scores through the form; resolves
  // once the rater presses submit. Returning null means nothing to submit
  // (double-click guard already consumed this image).
  collectScores(item: NextItem, form: RatingFormState): Promise<number[] | null>
  showProgress(index: number, total: number): void
  showGate(gate: GateStatus): void
  showComplete(status: string): void
  showError(message: string): void
}

export class SessionFlow {
  readonly form = new RatingFormState()

  constructor(
    private api: RatingApi,
    private view: RaterView,
  ) {}

  // next -> render -> collect -> submit, until the service reports done.
  // A 409 from the service means our cursor is stale: resync by refetching.
  private async runItems(sessionId: string): Promise<string> {
    for (;;) {
      const item = await this.api.nextItem(sessionId)
      if (item.done) {
        this.view.showComplete(item.status ?? 'complete')
        return item.status ?? 'complete'
      }
      this.view.showProgress(item.index!, item.total!)
      this.form.reset(item.image_id!)
      const scores = await this.view.collectScores(item, this.form)
      if (scores === null) continue
      try {
        await this.api.submitRating(sessionId, item.image_id!, scores)
      } catch (err) {
        if (err instanceof ApiError && err.status === 409) continue
        this.view.showError(err instanceof Error ? err.message : String(err))
        throw err
      }
    }
  }

  // One pilot session; exactly one gate call on completion.
  async runPilot(raterId: string): Promise<GateStatus> {
    const session = await this.api.createSession(raterId, 'pilot')
    await this.runItems(session.session_id)
    const gate = await this.api.gateStatus(session.session_id)
    this.view.showGate(gate)
    return gate
  }

  // Failed pilots offer retraining: open a fresh pilot session and repeat.
  async runPilotUntilPass(raterId: string, maxAttempts = 3): Promise<GateStatus> {
    let gate: GateStatus | null = null
    for (let attempt = 0; attempt < maxAttempts; attempt++) {
      gate = await this.runPilot(raterId)
      if (gate.pass) return gate
    }
    return gate!
  }

  async runFormal(raterId: string): Promise<SessionSummary> {
    const session = await this.api.createSession(raterId, 'formal')
    await this.runItems(session.session_id)
    return this.api.getSession(session.session_id)
  }
}
