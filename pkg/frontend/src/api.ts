// Typed client for the listening-test service. The transport is injectable
// so tests can spy on every payload the client ever sees.

export interface PairPayload {
  pair: string
  target: string
  output: string
  index: number
  total: number
}

export interface DonePayload {
  done: true
  completed: number
}

export type NextResponse = PairPayload | DonePayload

export interface RatingAck {
  ok: boolean
  completed: number
  total: number
}

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message)
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>

export function isDone(r: NextResponse): r is DonePayload {
  return (r as DonePayload).done === true
}

export class ServiceClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = fetch.bind(globalThis),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, init)
    const body = await resp.text()
    if (!resp.ok) {
      let message = body
      try {
        message = (JSON.parse(body) as { error?: string }).error ?? body
      } catch {
        // non-JSON error body
      }
      throw new ApiError(resp.status, message)
    }
    return JSON.parse(body) as T
  }

  nextPair(raterId: string): Promise<NextResponse> {
    return this.request<NextResponse>(`/session/${encodeURIComponent(raterId)}/next`)
  }

  submitRating(raterId: string, pair: string, score: number): Promise<RatingAck> {
    return this.request<RatingAck>(`/session/${encodeURIComponent(raterId)}/rating`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ pair, score }),
    })
  }

  audioUrl(ref: string): string {
    return this.baseUrl + ref
  }
}
