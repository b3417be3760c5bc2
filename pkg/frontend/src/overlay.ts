// pixelwise compositing of an ownership map over the source image; pure
// array math so it is unit-testable without a canvas

/** Alpha-blend overlay RGBA over base RGBA at the given opacity.
 * opacity 0 returns the base pixels exactly, opacity 1 the overlay pixels
 * exactly; alpha is forced opaque. */
export function blend(
  base: Uint8ClampedArray, overlay: Uint8ClampedArray, opacity: number,
): Uint8ClampedArray {
  if (base.length !== overlay.length) {
    throw new Error(`size mismatch: ${base.length} vs ${overlay.length}`);
  }
  if (!(opacity >= 0 && opacity <= 1)) {
    throw new Error(`opacity ${opacity} outside [0, 1]`);
  }
  const out = new Uint8ClampedArray(base.length);
  for (let i = 0; i < base.length; i += 4) {
    for (let c = 0; c < 3; c++) {
      out[i + c] = Math.round(
        (1 - opacity) * base[i + c] + opacity * overlay[i + c],
      );
    }
    out[i + 3] = 255;
  }
  return out;
}

/** Ownership value in [0, 1] at pixel (x, y) of a grayscale RGBA image, as
 * shown in the hover readout. */
export function ownershipAt(
  gray: Uint8ClampedArray, width: number, x: number, y: number,
): number {
  return gray[4 * (y * width + x)] / 255;
}
