// Session flow for one rater: load the next blinded pair, require both
// sounds to be heard, capture a 1-5 judgment, advance. All state lives here;
// the DOM layer only renders it.

import { ApiError, isDone, ServiceClient, type PairPayload } from './api.js'

export type SoundLabel = 'A' | 'B'

export interface PairView {
  token: string
  index: number
  total: number
  // presentation order is randomized per pair and never sent to the server
  sources: Record<SoundLabel, string>
  played: Record<SoundLabel, boolean>
  submitting: boolean
}

export type SessionState =
  | { kind: 'loading' }
  | { kind: 'pair'; view: PairView; notice?: string }
  | { kind: 'done'; completed: number }
  | { kind: 'error'; message: string; retryable: true }

export class SessionController {
  private state: SessionState = { kind: 'loading' }
  private listeners: Array<(s: SessionState) => void> = []

  constructor(
    private client: ServiceClient,
    private raterId: string,
    private random: () => number = Math.random,
  ) {}

  onChange(listener: (s: SessionState) => void): void {
    this.listeners.push(listener)
  }

  getState(): SessionState {
    return this.state
  }

  private setState(next: SessionState): void {
    this.state = next
    for (const fn of this.listeners) fn(next)
  }

  async start(): Promise<void> {
    this.setState({ kind: 'loading' })
    await this.loadNext()
  }

  private toView(payload: PairPayload): PairView {
    const flip = this.random() < 0.5
    return {
      token: payload.pair,
      index: payload.index,
      total: payload.total,
      sources: flip
        ? { A: payload.output, B: payload.target }
        : { A: payload.target, B: payload.output },
      played: { A: false, B: false },
      submitting: false,
    }
  }

  private async loadNext(notice?: string): Promise<void> {
    try {
      const next = await this.client.nextPair(this.raterId)
      if (isDone(next)) {
        this.setState({ kind: 'done', completed: next.completed })
      } else {
        this.setState({ kind: 'pair', view: this.toView(next), notice })
      }
    } catch (err) {
      this.setState({ kind: 'error', message: describe(err), retryable: true })
    }
  }

  audioUrl(label: SoundLabel): string {
    if (this.state.kind !== 'pair') throw new Error('no active pair')
    return this.client.audioUrl(this.state.view.sources[label])
  }

  markPlayed(label: SoundLabel): void {
    if (this.state.kind !== 'pair') return
    const view = this.state.view
    this.setState({
      kind: 'pair',
      view: { ...view, played: { ...view.played, [label]: true } },
    })
  }

  /** Rating is allowed only after both sounds have been played. */
  canRate(): boolean {
    return this.state.kind === 'pair' && this.state.view.played.A && this.state.view.played.B
  }

  async rate(score: number): Promise<void> {
    if (this.state.kind !== 'pair' || this.state.view.submitting) return
    if (!this.canRate()) return
    if (!Number.isInteger(score) || score < 1 || score > 5) return
    const view = this.state.view
    this.setState({ kind: 'pair', view: { ...view, submitting: true } })
    try {
      await this.client.submitRating(this.raterId, view.token, score)
      await this.loadNext()
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // stale cursor (e.g. rated in another tab): resynchronize
        await this.loadNext(`out of sync, reloaded: ${err.message}`)
      } else if (err instanceof ApiError && err.status === 422) {
        this.setState({
          kind: 'pair',
          view: { ...view, submitting: false },
          notice: err.message,
        })
      } else {
        // network failure: keep the pair so the score can be retried
        this.setState({
          kind: 'pair',
          view: { ...view, submitting: false },
          notice: `submit failed, try again: ${describe(err)}`,
        })
      }
    }
  }

  async retry(): Promise<void> {
    await this.loadNext()
  }
}

function describe(err: unknown): string {
  if (err instanceof Error) return err.message
  return String(err)
}
