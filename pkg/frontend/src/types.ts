// Response shapes of the workbench HTTP service. Field names mirror the
// wire format exactly; nothing here is recomputed client-side.

export interface Issue {
  path: string;
  message: string;
}

export interface DatasetInfo {
  dataset_id: string;
  n_persons: number;
  n_events: number;
  conditions: string[];
  dictionary: unknown;
}

export interface AttritionStage {
  name: string;
  remaining: number;
  removed: number;
}

export interface StrengthenerNote {
  name: string;
  count: number;
  fraction: number | null;
}

export interface AttritionDoc {
  stages: AttritionStage[];
  strengtheners: StrengthenerNote[];
}

export interface RunSummary {
  run_id: string;
  dataset_id: string;
  definition_id: string;
  version: number;
  cohort_size: number;
  attrition: AttritionDoc;
  warnings: string[];
  cached: boolean;
}

export interface CohortRow {
  person_id: number;
  entry_date: string;
  exit_date: string;
}

export interface CohortPage {
  run_id: string;
  page: number;
  page_size: number;
  total: number;
  rows: CohortRow[];
}

export interface ConfusionDoc {
  tp: number;
  fp: number;
  fn: number;
  tn: number;
}

export type MetricsDoc = Record<string, number | null>;

export interface StratumDoc {
  axes: Record<string, string>;
  n: number;
  suppressed: boolean;
  confusion: ConfusionDoc | null;
  metrics: MetricsDoc | null;
}

export interface EvaluationReport {
  condition: string;
  overall: { n: number; confusion: ConfusionDoc; metrics: MetricsDoc };
  strata: StratumDoc[];
  min_cell: number;
  run_id?: string;
  dataset_id?: string;
  recorded?: unknown;
}

export interface ChecklistItemDoc {
  name: string;
  passed: boolean;
  detail: string;
}

export interface ChecklistDoc {
  passed: boolean;
  items: ChecklistItemDoc[];
  issues: Issue[];
  dataset_id: string;
}

export interface ParseResult {
  definition: Record<string, unknown>;
  issues: Issue[];
}

export interface VersionEntry {
  version: number;
  author: string;
  timestamp: string;
  change_note: string;
}

export interface EvaluationEntry {
  version: number;
  dataset_id: string;
  report_file: string;
  timestamp: string;
}

export interface HistoryDoc {
  definition_id: string;
  versions: VersionEntry[];
  evaluations: EvaluationEntry[];
}

export interface DiffChange {
  path: string;
  kind: 'changed' | 'added' | 'removed';
  from?: unknown;
  to?: unknown;
}

export interface DiffDoc {
  definition_id: string;
  a: number;
  b: number;
  changes: DiffChange[];
}

export interface MonitorPoint {
  timestamp: string;
  version: number;
  dataset_id: string;
  ppv: number | null;
}

export interface MonitorDoc {
  definition_id: string;
  points: MonitorPoint[];
}

export interface DefinitionListing {
  definition_id: string;
  latest_version: number;
  versions: VersionEntry[];
}
