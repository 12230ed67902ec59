// DOM layer: viewing-conditions checklist, image pane, six radio groups with
// tooltips, progress bar, gate feedback. All session logic lives in flow.ts.

import { GateStatus, NextItem, RatingApi } from './api'
import { CATEGORIES, Category, DIMENSIONS } from './dimensions'
import { RaterView } from './flow'
import { RatingFormState } from './state'

const CHECKLIST = [
  'Set the display to its native resolution and normal brightness.',
  'Dim ambient lighting and avoid reflections on the screen.',
  'Sit at roughly three screen heights from the display.',
  'Rate images in one sitting without editing tools or filters.',
]

export class DomRaterView implements RaterView {
  private resolveScores: ((scores: number[] | null) => void) | null = null

  constructor(
    private root: HTMLElement,
    private api: RatingApi,
  ) {}

  mountChecklist(onReady: () => void): void {
    const panel = document.createElement('div')
    panel.className = 'checklist'
    panel.innerHTML =
      '<h2>Before you start</h2><ul>' +
      CHECKLIST.map(line => `<li>${line}</li>`).join('') +
      '</ul>'
    const ready = document.createElement('button')
    ready.textContent = 'I have set up my viewing conditions'
    ready.addEventListener('click', () => {
      panel.remove()
      onReady()
    })
    panel.appendChild(ready)
    this.root.appendChild(panel)
  }

  collectScores(item: NextItem, form: RatingFormState): Promise<number[] | null> {
    this.renderItem(item, form)
    return new Promise(resolve => {
      this.resolveScores = resolve
    })
  }

  private renderItem(item: NextItem, form: RatingFormState): void {
    this.root.querySelector('.rating-pane')?.remove()
    const pane = document.createElement('div')
    pane.className = 'rating-pane'

    const img = document.createElement('img')
    img.src = this.api.imageUrl(item.image_id!)
    img.alt = `image ${item.image_id}`
    pane.appendChild(img)

    const submit = document.createElement('button')
    submit.textContent = 'Submit ratings'
    submit.disabled = true

    for (const dim of DIMENSIONS) {
      const group = document.createElement('fieldset')
      const legend = document.createElement('legend')
      legend.textContent = dim.label
      legend.title = dim.tooltip
      group.appendChild(legend)
      for (const category of CATEGORIES) {
        const label = document.createElement('label')
        const radio = document.createElement('input')
        radio.type = 'radio'
        radio.name = `dim-${dim.key}`
        radio.value = category
        radio.addEventListener('change', () => {
          form.select(dim.key, category as Category)
          submit.disabled = !form.submitEnabled
        })
        label.appendChild(radio)
        label.append(` ${category}`)
        group.appendChild(label)
      }
      pane.appendChild(group)
    }

    submit.addEventListener('click', () => {
      const scores = form.takeScores()
      submit.disabled = true
      this.resolveScores?.(scores)
      this.resolveScores = null
    })
    pane.appendChild(submit)
    this.root.appendChild(pane)
  }

  showProgress(index: number, total: number): void {
    let bar = this.root.querySelector<HTMLElement>('.progress')
    if (!bar) {
      bar = document.createElement('div')
      bar.className = 'progress'
      this.root.prepend(bar)
    }
    bar.textContent = `${index}/${total}`
  }

  showGate(gate: GateStatus): void {
    const panel = document.createElement('div')
    panel.className = 'gate'
    const rows = DIMENSIONS.map((dim, i) => {
      const rho = gate.per_dimension_srcc[i]
      return `<li>${dim.label}: ${rho === null ? 'not rankable' : rho.toFixed(3)}</li>`
    }).join('')
    panel.innerHTML =
      `<h2>Training ${gate.pass ? 'passed' : 'not passed'}</h2><ul>${rows}</ul>` +
      (gate.pass ? '' : '<p>You can repeat the training session.</p>')
    this.root.appendChild(panel)
  }

  showComplete(status: string): void {
    const note = document.createElement('p')
    note.className = 'complete'
    note.textContent = `Session finished with status: ${status}`
    this.root.appendChild(note)
  }

  showError(message: string): void {
    const note = document.createElement('p')
    note.className = 'error'
    note.textContent = message
  }
}
