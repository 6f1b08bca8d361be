// Workbench shell: wires the pure state and view modules to the DOM and
// the HTTP client. Single user, one screen visible at a time. In-flight
// run and evaluate requests are aborted when superseded.

import { ApiError, WorkbenchClient } from './api.js';
import * as state from './state.js';
import type { WorkbenchState } from './state.js';
import * as views from './views.js';
import type { Issue } from './types.js';

// same-origin when served over http; the default dev port when opened
// from disk against `serve --dev`
function defaultBase(): string {
  return window.location.protocol.startsWith('http') ? '' : 'http://127.0.0.1:8080';
}

let api = new WorkbenchClient({ baseUrl: defaultBase() });

let current: WorkbenchState = state.initialState();
let activeScreen = 'editor';
let definitionId: string | null = null;
let cohortPageNo = 1;
let runAbort: AbortController | null = null;
let evalAbort: AbortController | null = null;
let parseTimer: number | undefined;

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) {
    throw new Error(`missing element #${id}`);
  }
  return el as T;
}

function setState(next: WorkbenchState): void {
  current = next;
  render();
}

function issuesFrom(err: unknown): Issue[] {
  if (err instanceof ApiError) {
    return err.issues.length > 0 ? err.issues : [{ path: '$', message: err.message }];
  }
  if (err instanceof DOMException && err.name === 'AbortError') {
    return [];
  }
  return [{ path: '$', message: String(err) }];
}

function fail(err: unknown): void {
  const issues = issuesFrom(err);
  if (issues.length > 0) {
    setState(state.withErrors(current, issues));
  }
}

// -- screen rendering ---------------------------------------------------------

function render(): void {
  for (const name of ['editor', 'run', 'evaluation', 'history']) {
    byId(`screen-${name}`).hidden = name !== activeScreen;
    byId(`tab-${name}`).classList.toggle('active', name === activeScreen);
  }
  byId('errors').innerHTML = views.renderErrorPanel(current.errors);

  byId('editor-annotations').innerHTML = views.renderDraftAnnotations(
    current.draft,
    current.parseIssues,
  );
  byId('parse-issues').innerHTML = views.renderIssueList(current.parseIssues);
  byId('form-view').innerHTML = current.parsed
    ? views.renderFormView(current.parsed)
    : '<p class="muted">fix parse errors to see the structured view</p>';
  byId('lint-panel').innerHTML = current.lint ? views.renderLintPanel(current.lint) : '';

  byId('run-view').innerHTML = views.renderRunComparison(current.runs);
  byId('evaluation-view').innerHTML = current.evaluation
    ? views.renderEvaluation(current.evaluation)
    : '<p class="muted">run the definition, then evaluate it against a labelled condition</p>';
  (byId<HTMLInputElement>('min-cell')).value = String(current.minCell);

  byId('history-view').innerHTML = current.history
    ? views.renderHistoryView(current.history, current.diff, current.monitorPoints)
    : '<p class="muted">save a definition to start its history</p>';

  wireDynamic();
}

// handlers for elements created inside innerHTML renders
function wireDynamic(): void {
  const apply = document.getElementById('apply-form');
  if (apply) {
    apply.addEventListener('click', () => void applyFormEdits());
  }
  const loadDiff = document.getElementById('load-diff');
  if (loadDiff) {
    loadDiff.addEventListener('click', () => void fetchDiff());
  }
  const prev = document.getElementById('cohort-prev');
  if (prev) {
    prev.addEventListener('click', () => void loadCohort(cohortPageNo - 1));
  }
  const next = document.getElementById('cohort-next');
  if (next) {
    next.addEventListener('click', () => void loadCohort(cohortPageNo + 1));
  }
}

// -- editor actions ------------------------------------------------------------

async function parseDraft(): Promise<void> {
  const text = current.draft;
  if (text.trim() === '') {
    return;
  }
  try {
    const result = await api.parse(text);
    if (current.draft === text) {
      setState(state.withParseResult(current, result));
    }
  } catch (err) {
    if (err instanceof ApiError && err.status === 422) {
      if (current.draft === text) {
        setState(state.withParseFailure(current, err.issues));
      }
      return;
    }
    fail(err);
  }
}

function onDraftInput(text: string): void {
  current = state.withDraft(current, text);
  window.clearTimeout(parseTimer);
  parseTimer = window.setTimeout(() => void parseDraft(), 300);
  render();
}

/** Collect window inputs, patch the parsed doc, and let the server rewrite
 *  the DSL text. The textarea content is replaced wholesale: text stays
 *  the single source of truth. */
async function applyFormEdits(): Promise<void> {
  if (!current.parsed) {
    return;
  }
  const doc = JSON.parse(JSON.stringify(current.parsed)) as Record<string, unknown>;
  for (const input of document.querySelectorAll<HTMLInputElement>('.window-field')) {
    const path = input.dataset.path;
    if (!path) {
      continue;
    }
    setByPath(doc, path, Number(input.value));
  }
  try {
    const { dsl } = await api.format(doc);
    byId<HTMLTextAreaElement>('editor').value = dsl;
    onDraftInput(dsl);
  } catch (err) {
    fail(err);
  }
}

function setByPath(doc: Record<string, unknown>, path: string, value: number): void {
  const segments = path.split('.');
  let node: unknown = doc;
  for (const seg of segments.slice(0, -1)) {
    if (Array.isArray(node)) {
      node = node[Number(seg)];
    } else if (node && typeof node === 'object') {
      node = (node as Record<string, unknown>)[seg];
    }
  }
  if (node && typeof node === 'object') {
    (node as Record<string, unknown>)[segments[segments.length - 1]] = value;
  }
}

async function lintDraft(): Promise<void> {
  if (!current.datasetId) {
    return;
  }
  try {
    setState(state.withLint(current, await api.lint(current.draft, current.datasetId)));
  } catch (err) {
    fail(err);
  }
}

async function saveDefinition(): Promise<void> {
  const author = byId<HTMLInputElement>('author').value;
  const note = byId<HTMLInputElement>('change-note').value;
  try {
    const saved = await api.saveDefinition(current.draft, author, note);
    definitionId = saved.definition_id;
    byId('save-result').textContent = `saved ${saved.definition_id} as version ${saved.version}`;
    await loadHistory();
  } catch (err) {
    fail(err);
  }
}

// -- run and evaluate -----------------------------------------------------------

async function runDraft(): Promise<void> {
  if (!current.datasetId) {
    fail(new Error('pick a dataset first'));
    return;
  }
  runAbort?.abort();
  runAbort = new AbortController();
  try {
    const run = await api.run(current.draft, current.datasetId, runAbort.signal);
    setState(state.withRun(current, run));
    activeScreen = 'run';
    cohortPageNo = 1;
    render();
    await loadCohort(1);
  } catch (err) {
    fail(err);
  }
}

async function loadCohort(pageNo: number): Promise<void> {
  const run = current.runs[0];
  if (!run) {
    return;
  }
  try {
    const page = await api.cohortPage(run.run_id, pageNo, 50);
    cohortPageNo = page.page;
    byId('cohort-view').innerHTML = views.renderCohortPage(page);
    wireDynamic();
  } catch (err) {
    fail(err);
  }
}

async function evaluateRun(): Promise<void> {
  const run = current.runs[0];
  if (!run) {
    fail(new Error('run the definition first'));
    return;
  }
  const condition = byId<HTMLInputElement>('condition').value;
  const minCell = Number(byId<HTMLInputElement>('min-cell').value);
  const strata = byId<HTMLInputElement>('strata')
    .value.split(',')
    .map((s) => s.trim())
    .filter((s) => s.length > 0);
  current = state.withMinCell(current, minCell);
  evalAbort?.abort();
  evalAbort = new AbortController();
  try {
    const report = await api.evaluate(run.run_id, condition, minCell, strata, evalAbort.signal);
    setState(state.withEvaluation(current, report));
    activeScreen = 'evaluation';
    render();
  } catch (err) {
    fail(err);
  }
}

// -- history --------------------------------------------------------------------

async function loadHistory(): Promise<void> {
  const id = definitionId ?? byId<HTMLInputElement>('history-id').value.trim();
  if (!id) {
    return;
  }
  definitionId = id;
  try {
    const history = await api.history(id);
    const monitor = await api.monitor(id);
    current = state.withHistory(current, history);
    setState(state.withMonitor(current, monitor.points));
  } catch (err) {
    fail(err);
  }
}

async function fetchDiff(): Promise<void> {
  if (!definitionId) {
    return;
  }
  const a = Number(byId<HTMLInputElement>('diff-a').value);
  const b = Number(byId<HTMLInputElement>('diff-b').value);
  try {
    setState(state.withDiff(current, await api.diff(definitionId, a, b)));
  } catch (err) {
    fail(err);
  }
}

// -- boot -------------------------------------------------------------------------

async function loadDatasets(): Promise<void> {
  const select = byId<HTMLSelectElement>('dataset');
  try {
    const datasets = await api.datasets();
    select.innerHTML = views.renderDatasetOptions(datasets, null);
    if (datasets.length > 0) {
      current = state.withDataset(current, datasets[0].dataset_id);
    }
  } catch (err) {
    fail(err);
  }
}

async function boot(): Promise<void> {
  const select = byId<HTMLSelectElement>('dataset');
  const server = byId<HTMLInputElement>('server');
  server.value = defaultBase();
  server.addEventListener('change', () => {
    api = new WorkbenchClient({ baseUrl: server.value });
    void loadDatasets();
  });
  await loadDatasets();

  select.addEventListener('change', () => {
    setState(state.withDataset(current, select.value));
  });
  byId<HTMLTextAreaElement>('editor').addEventListener('input', (ev) => {
    onDraftInput((ev.target as HTMLTextAreaElement).value);
  });
  byId('lint-btn').addEventListener('click', () => void lintDraft());
  byId('run-btn').addEventListener('click', () => void runDraft());
  byId('save-btn').addEventListener('click', () => void saveDefinition());
  byId('evaluate-btn').addEventListener('click', () => void evaluateRun());
  byId('history-btn').addEventListener('click', () => void loadHistory());
  for (const name of ['editor', 'run', 'evaluation', 'history']) {
    byId(`tab-${name}`).addEventListener('click', () => {
      activeScreen = name;
      render();
    });
  }
  render();
}

document.addEventListener('DOMContentLoaded', () => void boot());
