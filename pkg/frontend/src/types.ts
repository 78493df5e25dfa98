/**
 * API payload types and runtime guards.
 *
 * Letters and output fields are data, never hardcoded: whatever letter set
 * the server sends is what gets rendered. Guards throw TypeError on shape
 * mismatches so malformed payloads fail loudly instead of rendering junk.
 */

export const DIMENSIONS = [
  "lesion_description",
  "etiology_pathogenesis",
  "syndrome_differentiation",
  "treatment_principle",
  "prescriptions_medications",
  "readability",
] as const;

export type Dimension = (typeof DIMENSIONS)[number];

export const DIMENSION_LABELS: Record<Dimension, string> = {
  lesion_description: "Dermatologic lesion description",
  etiology_pathogenesis: "Etiology and pathogenesis",
  syndrome_differentiation: "Syndrome differentiation",
  treatment_principle: "Treatment principle",
  prescriptions_medications: "Prescriptions and medications",
  readability: "Readability",
};

export const MIN_SCORE = 0;
export const MAX_SCORE = 10;

export const OUTPUT_FIELDS = [
  "description",
  "pathogenesis",
  "syndrome",
  "treatment",
  "prescription",
] as const;

export type OutputField = (typeof OUTPUT_FIELDS)[number];

export const OUTPUT_FIELD_LABELS: Record<OutputField, string> = {
  description: "Lesion description",
  pathogenesis: "Pathogenesis analysis",
  syndrome: "Syndrome differentiation",
  treatment: "Treatment principle",
  prescription: "Prescription",
};

export interface Assignment {
  case_id: string;
  letters: string[];
  completed: Record<string, boolean>;
}

export interface AssignmentsResponse {
  study_id: string;
  evaluator_id: string;
  closed: boolean;
  assignments: Assignment[];
}

export interface CaseSummary {
  case_id: string;
  history: string;
  physical_signs: string;
  symptoms: string;
  image_urls: string[];
}

export interface CaseOutputs {
  case: CaseSummary;
  outputs: Record<string, Partial<Record<OutputField, string>>>;
}

export interface SheetPayload {
  evaluator_id: string;
  case_id: string;
  letter: string;
  scores: Record<Dimension, number>;
}

export interface SheetAccepted {
  status: string;
  total: number;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  field?: string;
}

function isRecord(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

function asString(value: unknown, context: string): string {
  if (typeof value !== "string") {
    throw new TypeError(`${context}: expected a string`);
  }
  return value;
}

export function parseAssignments(payload: unknown): AssignmentsResponse {
  if (!isRecord(payload) || !Array.isArray(payload.assignments)) {
    throw new TypeError("assignments payload: expected {assignments: []}");
  }
  const assignments = payload.assignments.map((raw, i): Assignment => {
    if (!isRecord(raw) || !Array.isArray(raw.letters) || !isRecord(raw.completed)) {
      throw new TypeError(`assignments[${i}]: bad shape`);
    }
    const letters = raw.letters.map((l, j) => asString(l, `assignments[${i}].letters[${j}]`));
    const completed: Record<string, boolean> = {};
    for (const letter of letters) {
      completed[letter] = raw.completed[letter] === true;
    }
    return {
      case_id: asString(raw.case_id, `assignments[${i}].case_id`),
      letters,
      completed,
    };
  });
  return {
    study_id: asString(payload.study_id, "study_id"),
    evaluator_id: asString(payload.evaluator_id, "evaluator_id"),
    closed: payload.closed === true,
    assignments,
  };
}

export function parseCaseOutputs(payload: unknown): CaseOutputs {
  if (!isRecord(payload) || !isRecord(payload.case) || !isRecord(payload.outputs)) {
    throw new TypeError("outputs payload: expected {case, outputs}");
  }
  const caseRaw = payload.case;
  const summary: CaseSummary = {
    case_id: asString(caseRaw.case_id ?? "", "case.case_id"),
    history: asString(caseRaw.history ?? "", "case.history"),
    physical_signs: asString(caseRaw.physical_signs ?? "", "case.physical_signs"),
    symptoms: asString(caseRaw.symptoms ?? "", "case.symptoms"),
    image_urls: Array.isArray(caseRaw.image_urls)
      ? caseRaw.image_urls.map((u, i) => asString(u, `case.image_urls[${i}]`))
      : [],
  };
  const outputs: CaseOutputs["outputs"] = {};
  for (const [letter, fields] of Object.entries(payload.outputs)) {
    if (!isRecord(fields)) {
      throw new TypeError(`outputs[${letter}]: expected an object`);
    }
    const entry: Partial<Record<OutputField, string>> = {};
    for (const field of OUTPUT_FIELDS) {
      const value = fields[field];
      if (value !== undefined) {
        entry[field] = asString(value, `outputs[${letter}].${field}`);
      }
    }
    outputs[letter] = entry;
  }
  return { case: summary, outputs };
}

export function parseApiError(payload: unknown): ApiErrorBody | null {
  if (!isRecord(payload) || typeof payload.code !== "string" || typeof payload.message !== "string") {
    return null;
  }
  const body: ApiErrorBody = { code: payload.code, message: payload.message };
  if (typeof payload.field === "string") {
    body.field = payload.field;
  }
  return body;
}
