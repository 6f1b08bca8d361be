// Thin typed client over the workbench HTTP service. Every method returns
// the server document unmodified; rendering code must not derive numbers
// from these beyond layout.

import type {
  ChecklistDoc,
  CohortPage,
  DatasetInfo,
  DefinitionListing,
  DiffDoc,
  EvaluationReport,
  HistoryDoc,
  Issue,
  MonitorDoc,
  ParseResult,
  RunSummary,
} from './types.js';

export class ApiError extends Error {
  status: number;
  issues: Issue[];

  constructor(status: number, message: string, issues: Issue[] = []) {
    super(message);
    this.status = status;
    this.issues = issues;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface ClientOptions {
  baseUrl?: string;
  fetchImpl?: FetchLike;
}

interface RequestOpts {
  method?: string;
  body?: unknown;
  signal?: AbortSignal;
}

// 422 bodies carry {detail: {issues: [...]}} for parse and compile
// failures, or {detail: "<message>"} for registry conflicts.
function issuesFromDetail(detail: unknown): Issue[] {
  if (typeof detail === 'string') {
    return [{ path: '$', message: detail }];
  }
  if (detail && typeof detail === 'object' && Array.isArray((detail as { issues?: unknown }).issues)) {
    return (detail as { issues: Issue[] }).issues;
  }
  return [];
}

export class WorkbenchClient {
  private baseUrl: string;
  private fetchImpl: FetchLike;

  constructor(options: ClientOptions = {}) {
    this.baseUrl = (options.baseUrl ?? '').replace(/\/$/, '');
    this.fetchImpl = options.fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, opts: RequestOpts = {}): Promise<T> {
    const init: RequestInit = {
      method: opts.method ?? 'GET',
      signal: opts.signal,
    };
    if (opts.body !== undefined) {
      init.body = JSON.stringify(opts.body);
      init.headers = { 'content-type': 'application/json' };
    }
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) {
      let detail: unknown = null;
      try {
        detail = ((await response.json()) as { detail?: unknown }).detail;
      } catch {
        // non-JSON error body; fall through with the status line only
      }
      const message = typeof detail === 'string' ? detail : `request failed (${response.status})`;
      throw new ApiError(response.status, message, issuesFromDetail(detail));
    }
    return (await response.json()) as T;
  }

  datasets(): Promise<DatasetInfo[]> {
    return this.request('/datasets');
  }

  parse(dslText: string, signal?: AbortSignal): Promise<ParseResult> {
    return this.request('/parse', { method: 'POST', body: { dsl: dslText }, signal });
  }

  format(definition: Record<string, unknown>): Promise<{ dsl: string }> {
    return this.request('/format', { method: 'POST', body: { definition } });
  }

  lint(dslText: string, datasetId: string): Promise<ChecklistDoc> {
    return this.request('/lint', { method: 'POST', body: { dsl: dslText, dataset_id: datasetId } });
  }

  saveDefinition(dslText: string, author: string, changeNote: string): Promise<{ definition_id: string; version: number }> {
    return this.request('/definitions', {
      method: 'POST',
      body: { dsl: dslText, author, change_note: changeNote },
    });
  }

  listDefinitions(): Promise<DefinitionListing[]> {
    return this.request('/definitions');
  }

  run(dslText: string, datasetId: string, signal?: AbortSignal): Promise<RunSummary> {
    return this.request('/run', {
      method: 'POST',
      body: { dsl: dslText, dataset_id: datasetId },
      signal,
    });
  }

  cohortPage(runId: string, page: number, pageSize: number): Promise<CohortPage> {
    return this.request(`/runs/${runId}/cohort?page=${page}&page_size=${pageSize}`);
  }

  evaluate(
    runId: string,
    condition: string,
    minCell: number,
    strata: string[],
    signal?: AbortSignal,
  ): Promise<EvaluationReport> {
    const body: Record<string, unknown> = { run_id: runId, condition, min_cell: minCell };
    if (strata.length > 0) {
      body.strata = strata;
    }
    return this.request('/evaluate', { method: 'POST', body, signal });
  }

  history(definitionId: string): Promise<HistoryDoc> {
    return this.request(`/definitions/${definitionId}/history`);
  }

  diff(definitionId: string, a: number, b: number): Promise<DiffDoc> {
    return this.request(`/definitions/${definitionId}/diff?a=${a}&b=${b}`);
  }

  monitor(definitionId: string): Promise<MonitorDoc> {
    return this.request(`/definitions/${definitionId}/monitor`);
  }
}
