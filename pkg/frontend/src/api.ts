// Typed client for the rating-session service. The fetch implementation is
// injected so tests can run without a browser or a live server.

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>

export interface SessionSummary {
  session_id: string
  rater_id: string
  mode: 'pilot' | 'formal'
  status: string
  cursor: number
  total_items: number
  outlier_count: number
  screened_count: number
}

export interface NextItem {
  image_id?: string
  index?: number
  total?: number
  done?: boolean
  status?: string
}

export interface LiveFlags {
  flagged: boolean | null
  outlier_count: number
  screened_count: number
}

export interface SubmitResponse {
  accepted: boolean
  live_flags: LiveFlags
  progress: { index: number; total: number }
  status: string
}

export interface GateStatus {
  pass: boolean
  per_dimension_srcc: (number | null)[]
  diagnostics: string[]
  status: string
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message)
  }
}

export class RatingApi {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, init)
    const body = await resp.text()
    if (!resp.ok) {
      let message = body
      try {
        message = JSON.parse(body).error ?? body
      } catch {
        /* plain-text error body */
      }
      throw new ApiError(resp.status, message)
    }
    return JSON.parse(body) as T
  }

  createSession(raterId: string, mode: 'pilot' | 'formal'): Promise<SessionSummary> {
    return this.request('/sessions', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ rater_id: raterId, mode }),
    })
  }

  getSession(sessionId: string): Promise<SessionSummary> {
    return this.request(`/sessions/${sessionId}`)
  }

  nextItem(sessionId: string): Promise<NextItem> {
    return this.request(`/sessions/${sessionId}/next`)
  }

  submitRating(sessionId: string, imageId: string, scores: number[]): Promise<SubmitResponse> {
    return this.request(`/sessions/${sessionId}/ratings`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ image_id: imageId, scores }),
    })
  }

  gateStatus(sessionId: string): Promise<GateStatus> {
    return this.request(`/sessions/${sessionId}/gate`)
  }

  imageUrl(imageId: string): string {
    return `${this.baseUrl}/images/${imageId}`
  }

  async exportLog(): Promise<string> {
    const resp = await this.fetchImpl(this.baseUrl + '/export/ratings')
    return resp.text()
  }
}
