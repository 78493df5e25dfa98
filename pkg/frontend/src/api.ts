/**
 * Typed client for the blinded evaluation service.
 *
 * Distinguishes three failure classes the UI reacts to differently:
 * AuthRequiredError (show the login prompt), NetworkError (retry banner),
 * and ApiError (server-side rejection with a code and optional field).
 */

import {
  AssignmentsResponse,
  CaseOutputs,
  SheetAccepted,
  SheetPayload,
  parseApiError,
  parseAssignments,
  parseCaseOutputs,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly field?: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class AuthRequiredError extends Error {
  constructor() {
    super("evaluator token missing or rejected");
    this.name = "AuthRequiredError";
  }
}

export class NetworkError extends Error {
  constructor(cause: unknown) {
    super(`network failure: ${cause instanceof Error ? cause.message : String(cause)}`);
    this.name = "NetworkError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly studyId: string,
    private readonly token: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(path: string, init: RequestInit = {}): Promise<unknown> {
    const url = `${this.baseUrl.replace(/\/$/, "")}${path}`;
    let response: Response;
    try {
      response = await this.fetchFn(url, {
        ...init,
        headers: {
          "Content-Type": "application/json",
          "X-Evaluator-Token": this.token,
          ...(init.headers ?? {}),
        },
      });
    } catch (cause) {
      throw new NetworkError(cause);
    }
    if (response.status === 401) {
      throw new AuthRequiredError();
    }
    let payload: unknown = null;
    try {
      payload = await response.json();
    } catch {
      payload = null;
    }
    if (!response.ok) {
      const body = parseApiError(payload);
      throw new ApiError(
        response.status,
        body?.code ?? "unknown_error",
        body?.message ?? `request failed with status ${response.status}`,
        body?.field,
      );
    }
    return payload;
  }

  async fetchAssignments(evaluatorId: string): Promise<AssignmentsResponse> {
    const payload = await this.request(
      `/studies/${encodeURIComponent(this.studyId)}/assignments?evaluator=${encodeURIComponent(evaluatorId)}`,
    );
    return parseAssignments(payload);
  }

  async fetchOutputs(caseId: string): Promise<CaseOutputs> {
    const payload = await this.request(
      `/studies/${encodeURIComponent(this.studyId)}/cases/${encodeURIComponent(caseId)}/outputs`,
    );
    return parseCaseOutputs(payload);
  }

  async submitSheet(sheet: SheetPayload): Promise<SheetAccepted> {
    const payload = await this.request(
      `/studies/${encodeURIComponent(this.studyId)}/sheets`,
      { method: "POST", body: JSON.stringify(sheet) },
    );
    return payload as SheetAccepted;
  }
}
