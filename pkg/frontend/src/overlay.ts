// Texture / vibration-map overlay: two stacked images, blended by opacity.

export type OverlayMode = "texture" | "map" | "blend";

export interface OverlayElements {
  texture: HTMLImageElement;
  map: HTMLImageElement;
}

/**
 * At blend 0 only the texture shows; at blend 1 the map preview fully
 * covers it (the image element shows the served PNG bytes untouched, so
 * "100%. map" is pixel-identical to the preview file by construction).
 */
export function applyOverlay(els: OverlayElements, mode: OverlayMode, blend: number): number {
  const alpha = mode === "texture" ? 0 : mode === "map" ? 1 : Math.min(1, Math.max(0, blend));
  els.map.style.opacity = String(alpha);
  return alpha;
}

export function textureImageUrl(name: string): string {
  return `/textures/${name}.texture.png`;
}

export function previewImageUrl(name: string): string {
  return `/textures/${name}.png`;
}
