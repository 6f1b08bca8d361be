// Pure workbench state and its transitions. The DSL text is the single
// source of truth for the draft; the parsed form view is derived and is
// discarded whenever the text changes. Registered versions are never
// mutated here: saving is an API call, not a state edit.

import type {
  ChecklistDoc,
  DiffDoc,
  EvaluationReport,
  HistoryDoc,
  Issue,
  MonitorPoint,
  ParseResult,
  RunSummary,
} from './types.js';

export interface WorkbenchState {
  datasetId: string | null;
  draft: string;
  parsed: Record<string, unknown> | null;
  parseIssues: Issue[];
  lint: ChecklistDoc | null;
  // newest first; capped at two so the run view can compare side by side
  runs: RunSummary[];
  evaluation: EvaluationReport | null;
  minCell: number;
  history: HistoryDoc | null;
  diff: DiffDoc | null;
  monitorPoints: MonitorPoint[] | null;
  errors: Issue[];
}

export const MAX_VISIBLE_RUNS = 2;

export function initialState(): WorkbenchState {
  return {
    datasetId: null,
    draft: '',
    parsed: null,
    parseIssues: [],
    lint: null,
    runs: [],
    evaluation: null,
    minCell: 10,
    history: null,
    diff: null,
    monitorPoints: null,
    errors: [],
  };
}

export function withDataset(state: WorkbenchState, datasetId: string): WorkbenchState {
  if (datasetId === state.datasetId) {
    return state;
  }
  // results computed against the old dataset are stale
  return { ...state, datasetId, runs: [], evaluation: null, errors: [] };
}

export function withDraft(state: WorkbenchState, text: string): WorkbenchState {
  if (text === state.draft) {
    return state;
  }
  return { ...state, draft: text, parsed: null, parseIssues: [], lint: null, errors: [] };
}

export function withParseResult(state: WorkbenchState, result: ParseResult): WorkbenchState {
  return { ...state, parsed: result.definition, parseIssues: result.issues, errors: [] };
}

export function withParseFailure(state: WorkbenchState, issues: Issue[]): WorkbenchState {
  return { ...state, parsed: null, parseIssues: issues };
}

export function withLint(state: WorkbenchState, lint: ChecklistDoc): WorkbenchState {
  return { ...state, lint };
}

export function withRun(state: WorkbenchState, run: RunSummary): WorkbenchState {
  const runs = [run, ...state.runs].slice(0, MAX_VISIBLE_RUNS);
  // an evaluation belongs to a specific run; a new run invalidates it
  return { ...state, runs, evaluation: null, errors: [] };
}

export function withEvaluation(state: WorkbenchState, report: EvaluationReport): WorkbenchState {
  return { ...state, evaluation: report, errors: [] };
}

export function withMinCell(state: WorkbenchState, minCell: number): WorkbenchState {
  return { ...state, minCell };
}

export function withHistory(state: WorkbenchState, history: HistoryDoc): WorkbenchState {
  return { ...state, history };
}

export function withDiff(state: WorkbenchState, diff: DiffDoc): WorkbenchState {
  return { ...state, diff };
}

export function withMonitor(state: WorkbenchState, points: MonitorPoint[]): WorkbenchState {
  return { ...state, monitorPoints: points };
}

export function withErrors(state: WorkbenchState, errors: Issue[]): WorkbenchState {
  return { ...state, errors };
}

export function clearErrors(state: WorkbenchState): WorkbenchState {
  return state.errors.length === 0 ? state : { ...state, errors: [] };
}
