import { SearchHit } from "./types.js";

export const FUSION_LAMBDA = 0.5;
export const FUSION_TOLERANCE = 1e-6;

/** Similarity a hit's distance implies: 1/(1+d), 0 when distance is absent. */
export function similarityFromDistance(distance: number | null | undefined): number {
  return distance === null || distance === undefined ? 0 : 1 / (1 + distance);
}

/**
 * Client-side check that the server's combined score really is the
 * weighted fusion of its components.
 */
export function fusionHolds(hit: SearchHit, lambda = FUSION_LAMBDA, tol = FUSION_TOLERANCE): boolean {
  if (hit.bm25_norm === undefined || hit.similarity === undefined) {
    return false;
  }
  const expected = lambda * hit.bm25_norm + (1 - lambda) * hit.similarity;
  return Math.abs(hit.combined - expected) <= tol;
}
