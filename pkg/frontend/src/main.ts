import { ServiceClient } from './api.js'
import { SessionController } from './session.js'
import { mountUi } from './ui.js'

function main(): void {
  const params = new URLSearchParams(window.location.search)
  const rater = params.get('rater')
  const root = document.getElementById('app') as HTMLElement
  if (!rater) {
    root.innerHTML = `<div class="panel"><h1>Sound similarity rating</h1>
      <p>Add <code>?rater=&lt;your-id&gt;</code> to the URL to begin.</p></div>`
    return
  }
  const base = params.get('service') ?? ''
  const controller = new SessionController(new ServiceClient(base), rater)
  mountUi(root, controller)
  void controller.start()
}

main()
