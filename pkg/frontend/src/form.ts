/**
 * Score form state machine, pure and fuzzable.
 *
 * Guarantees: a payload is only ever produced through beginSubmit, and
 * beginSubmit yields one exactly when every dimension holds an integer in
 * [MIN_SCORE, MAX_SCORE] and no submission is in flight. setScore silently
 * ignores values the server would reject, so the machine cannot reach a
 * state that emits an invalid payload.
 */

import {
  DIMENSIONS,
  Dimension,
  MAX_SCORE,
  MIN_SCORE,
  SheetPayload,
  ApiErrorBody,
} from "./types.js";

export type SubmitPhase = "idle" | "inFlight" | "accepted" | "rejected";

export interface FormState {
  readonly scores: Readonly<Record<Dimension, number | null>>;
  readonly phase: SubmitPhase;
  readonly rejection: ApiErrorBody | null;
}

export function emptyForm(): FormState {
  const scores = {} as Record<Dimension, number | null>;
  for (const dimension of DIMENSIONS) {
    scores[dimension] = null;
  }
  return { scores, phase: "idle", rejection: null };
}

export function isValidScore(value: unknown): value is number {
  return (
    typeof value === "number" &&
    Number.isInteger(value) &&
    value >= MIN_SCORE &&
    value <= MAX_SCORE
  );
}

/** Set one dimension; invalid values and in-flight edits leave the state unchanged. */
export function setScore(state: FormState, dimension: Dimension, value: number | null): FormState {
  if (state.phase === "inFlight") {
    return state;
  }
  if (value !== null && !isValidScore(value)) {
    return state;
  }
  return {
    scores: { ...state.scores, [dimension]: value },
    phase: "idle",
    rejection: null,
  };
}

export function isComplete(state: FormState): boolean {
  return DIMENSIONS.every((dimension) => isValidScore(state.scores[dimension]));
}

export function total(state: FormState): number {
  return DIMENSIONS.reduce((sum, dimension) => sum + (state.scores[dimension] ?? 0), 0);
}

export function canSubmit(state: FormState): boolean {
  return isComplete(state) && state.phase !== "inFlight" && state.phase !== "accepted";
}

export interface SubmitStart {
  state: FormState;
  payload: SheetPayload;
}

/** Start a submission; returns null (and no payload) when the form is not ready. */
export function beginSubmit(
  state: FormState,
  meta: { evaluator_id: string; case_id: string; letter: string },
): SubmitStart | null {
  if (!canSubmit(state)) {
    return null;
  }
  const scores = {} as Record<Dimension, number>;
  for (const dimension of DIMENSIONS) {
    scores[dimension] = state.scores[dimension] as number;
  }
  return {
    state: { ...state, phase: "inFlight", rejection: null },
    payload: { ...meta, scores },
  };
}

export function resolveAccepted(state: FormState): FormState {
  return { ...state, phase: "accepted", rejection: null };
}

export function resolveRejected(state: FormState, rejection: ApiErrorBody): FormState {
  return { ...state, phase: "rejected", rejection };
}

/** The dimension to highlight after a rejection, when the server named one. */
export function highlightedField(state: FormState): Dimension | null {
  const field = state.rejection?.field;
  return field && (DIMENSIONS as readonly string[]).includes(field)
    ? (field as Dimension)
    : null;
}
