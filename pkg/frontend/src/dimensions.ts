// Quality dimensions in the fixed task order, with the rating instructions
// shown to raters as tooltips.

export interface Dimension {
  key: string
  label: string
  tooltip: string
}

export const DIMENSIONS: Dimension[] = [
  {
    key: 'noise',
    label: 'Noise',
    tooltip:
      'Noise assesses the level of visual artifacts, particularly under ' +
      'low-light conditions where excessive noise may obscure important ' +
      'facial details.',
  },
  {
    key: 'sharpness',
    label: 'Sharpness',
    tooltip:
      'Sharpness assesses the clarity and definition of facial structures, ' +
      'which may be degraded by motion blur, defocus, or low resolution.',
  },
  {
    key: 'colorfulness',
    label: 'Colorfulness',
    tooltip:
      'Colorfulness assesses the accuracy of color representation, which ' +
      'may be affected by infrared interference, poor lighting, or colored ' +
      'light sources such as traffic signals or neon lights, leading to ' +
      'unnatural hues or color shifts.',
  },
  {
    key: 'contrast',
    label: 'Contrast',
    tooltip:
      'Contrast assesses the dynamic range between light and dark regions, ' +
      'with lighting variations often causing overexposed or underexposed ' +
      'areas that reduce overall contrast.',
  },
  {
    key: 'fidelity',
    label: 'Fidelity',
    tooltip:
      'Fidelity assesses the authenticity of facial content by identifying ' +
      'pseudo-structures or hallucinated details introduced by enhancement ' +
      'algorithms, which may compromise the realism and trustworthiness of ' +
      'the image.',
  },
  {
    key: 'overall',
    label: 'Overall quality',
    tooltip:
      'Overall quality assesses the general perceptual quality by ' +
      'integrating all the above dimensions, balancing distortion severity ' +
      'and the fidelity of facial content.',
  },
]

// ACR categories, bad=1 through excellent=5; the mapping is fixed.
export const CATEGORIES = ['bad', 'poor', 'fair', 'good', 'excellent'] as const
export type Category = (typeof CATEGORIES)[number]

export function categoryToScore(category: Category): number {
  return CATEGORIES.indexOf(category) + 1
}
