// DOM layer: renders SessionState and forwards clicks / keys to the
// controller. Sounds are labeled neutrally; nothing about the underlying
// condition ever reaches this layer.

import { SessionController, type SessionState, type SoundLabel } from './session.js'

const LABELS: SoundLabel[] = ['A', 'B']

export function mountUi(root: HTMLElement, controller: SessionController): void {
  root.innerHTML = `
    <div class="panel">
      <h1>Sound similarity rating</h1>
      <p id="progress"></p>
      <p id="notice" class="notice"></p>
      <div id="players"></div>
      <div id="scale">
        <p>How similar are the two sounds? (1 = no similarity, 5 = near identical)</p>
        <div id="buttons"></div>
        <p class="hint">Keyboard: press 1-5 after listening to both sounds.</p>
      </div>
      <button id="retry" hidden>Retry</button>
      <div id="doneview" hidden></div>
    </div>`

  const progress = root.querySelector('#progress') as HTMLElement
  const notice = root.querySelector('#notice') as HTMLElement
  const players = root.querySelector('#players') as HTMLElement
  const buttons = root.querySelector('#buttons') as HTMLElement
  const scale = root.querySelector('#scale') as HTMLElement
  const retry = root.querySelector('#retry') as HTMLButtonElement
  const doneview = root.querySelector('#doneview') as HTMLElement

  for (let s = 1; s <= 5; s++) {
    const b = document.createElement('button')
    b.textContent = String(s)
    b.className = 'score'
    b.addEventListener('click', () => void controller.rate(s))
    buttons.appendChild(b)
  }
  retry.addEventListener('click', () => void controller.retry())
  document.addEventListener('keydown', (ev) => {
    if (ev.key >= '1' && ev.key <= '5') void controller.rate(Number(ev.key))
  })

  const render = (state: SessionState): void => {
    retry.hidden = state.kind !== 'error'
    doneview.hidden = state.kind !== 'done'
    scale.style.display = state.kind === 'pair' ? '' : 'none'
    players.style.display = state.kind === 'pair' ? '' : 'none'
    notice.textContent = ''

    if (state.kind === 'loading') {
      progress.textContent = 'Loading...'
      return
    }
    if (state.kind === 'error') {
      progress.textContent = ''
      notice.textContent = state.message
      return
    }
    if (state.kind === 'done') {
      progress.textContent = ''
      doneview.innerHTML = `<h2>All done</h2><p>You rated ${state.completed} pairs. Thank you!</p>`
      return
    }

    const view = state.view
    progress.textContent = `Pair ${view.index} of ${view.total}`
    if (state.notice) notice.textContent = state.notice

    if (players.childElementCount === 0) {
      for (const label of LABELS) {
        const wrap = document.createElement('div')
        wrap.className = 'player'
        wrap.innerHTML = `<span>Sound ${label}</span>`
        const audio = document.createElement('audio')
        audio.controls = true
        audio.preload = 'none'
        audio.dataset.label = label
        audio.addEventListener('play', () => controller.markPlayed(label))
        wrap.appendChild(audio)
        players.appendChild(wrap)
      }
    }
    for (const audio of players.querySelectorAll('audio')) {
      const label = audio.dataset.label as SoundLabel
      const url = controller.audioUrl(label)
      if (audio.src !== url) {
        audio.src = url
        audio.load()
      }
    }
    const enabled = controller.canRate() && !view.submitting
    for (const b of buttons.querySelectorAll('button')) {
      ;(b as HTMLButtonElement).disabled = !enabled
    }
  }

  controller.onChange(render)
  render(controller.getState())
}
