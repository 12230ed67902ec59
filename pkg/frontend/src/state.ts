// Form state for one displayed image: six category selections, submit gating,
// and a per-image idempotence guard against double submission.

import { CATEGORIES, Category, DIMENSIONS, categoryToScore } from './dimensions'

export class RatingFormState {
  private selections = new Map<string, Category>()
  private submittedFor: string | null = null
  currentImageId: string | null = null

  // Arms the form for one display cycle. A 409 resync redisplays the item
  // through reset(), so the double-click guard below must not outlive it.
  reset(imageId: string): void {
    this.currentImageId = imageId
    this.selections.clear()
    this.submittedFor = null
  }

  select(dimensionKey: string, category: Category): void {
    if (!DIMENSIONS.some(d => d.key === dimensionKey)) {
      throw new Error(`unknown dimension ${dimensionKey}`)
    }
    if (!CATEGORIES.includes(category)) {
      throw new Error(`unknown category ${category}`)
    }
    this.selections.set(dimensionKey, category)
  }

  selected(dimensionKey: string): Category | undefined {
    return this.selections.get(dimensionKey)
  }

  get submitEnabled(): boolean {
    return (
      this.currentImageId !== null &&
      this.submittedFor !== this.currentImageId &&
      DIMENSIONS.every(d => this.selections.has(d.key))
    )
  }

  // Marks the current image as submitted; returns the score vector exactly
  // once. A second call for the same image returns null (double-click guard).
  takeScores(): number[] | null {
    if (!this.submitEnabled) return null
    this.submittedFor = this.currentImageId
    return DIMENSIONS.map(d => categoryToScore(this.selections.get(d.key)!))
  }
}
