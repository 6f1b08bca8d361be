// HTML builders for the workbench screens. These are pure functions from
// server documents to markup so they can be tested without a DOM.
//
// Rendering rule: every number shown comes verbatim from an API response.
// The only arithmetic allowed here is layout (bar widths, chart scaling),
// never metric or count derivation.

import type {
  AttritionDoc,
  ChecklistDoc,
  CohortPage,
  DatasetInfo,
  DiffDoc,
  EvaluationReport,
  HistoryDoc,
  Issue,
  MetricsDoc,
  MonitorPoint,
  RunSummary,
  StratumDoc,
  VersionEntry,
} from './types.js';

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

// display formatting only; the value itself is the server's
export function formatMetric(value: number | null | undefined): string {
  if (value === null || value === undefined) {
    return 'n/a';
  }
  return value.toFixed(4);
}

export function renderIssueList(issues: Issue[]): string {
  if (issues.length === 0) {
    return '';
  }
  const items = issues
    .map((i) => `<li><code>${escapeHtml(i.path)}</code> ${escapeHtml(i.message)}</li>`)
    .join('');
  return `<ul class="issues">${items}</ul>`;
}

// -- editor ------------------------------------------------------------------

/** Parse "line:col" issue paths (1-based). Non-positional paths return null. */
export function issuePosition(path: string): { line: number; col: number } | null {
  const m = /^(\d+):(\d+)$/.exec(path);
  if (!m) {
    return null;
  }
  return { line: Number(m[1]), col: Number(m[2]) };
}

/**
 * Mirror of the draft text with parse-error positions wrapped in marker
 * spans. Rendered behind the textarea so errors show inline.
 */
export function renderDraftAnnotations(draft: string, issues: Issue[]): string {
  const marks = new Map<number, string[]>();
  for (const issue of issues) {
    const pos = issuePosition(issue.path);
    if (pos) {
      const key = pos.line;
      const existing = marks.get(key) ?? [];
      existing.push(`${pos.col}:${issue.message}`);
      marks.set(key, existing);
    }
  }
  const lines = draft.split('\n').map((line, idx) => {
    const lineNo = idx + 1;
    const lineMarks = marks.get(lineNo);
    if (!lineMarks) {
      return escapeHtml(line) || '&nbsp;';
    }
    // mark from the first error column to end of line
    const cols = lineMarks.map((m) => Number(m.split(':')[0]));
    const col = Math.max(1, Math.min(...cols));
    const before = escapeHtml(line.slice(0, col - 1));
    const after = escapeHtml(line.slice(col - 1)) || '&nbsp;';
    const title = escapeHtml(lineMarks.map((m) => m.split(':').slice(1).join(':')).join('; '));
    return `${before}<span class="err-span" title="${title}">${after}</span>`;
  });
  return `<pre class="editor-mirror" aria-hidden="true">${lines.join('\n')}</pre>`;
}

// -- structured form view ------------------------------------------------------

function describeQuery(query: Record<string, unknown>): string {
  const occ = query.occurrence as { kind: string; n?: number } | undefined;
  const occText = occ ? (occ.kind === 'nth' ? `nth(${occ.n})` : occ.kind) : '';
  return `${escapeHtml(String(query.domain))} in ${escapeHtml(String(query.concept_set_ref))} (${escapeHtml(occText)})`;
}

function windowInput(path: string, value: number): string {
  return `<input type="number" class="window-field" data-path="${escapeHtml(path)}" value="${value}">`;
}

/**
 * Read-mostly rendering of the parsed definition. Temporal windows get
 * number inputs; applying them rewrites the DSL text through the format
 * endpoint, so the text stays the source of truth.
 */
export function renderFormView(definition: Record<string, unknown>): string {
  const parts: string[] = [];
  parts.push(`<dl class="form-head">`);
  parts.push(`<dt>id</dt><dd>${escapeHtml(String(definition.id))}</dd>`);
  const metadata = definition.metadata as { intent?: string } | undefined;
  if (metadata && metadata.intent) {
    parts.push(`<dt>intent</dt><dd>${escapeHtml(metadata.intent)}</dd>`);
  }
  parts.push(
    `<dt>prior observation</dt><dd>${windowInput('prior_observation_days', Number(definition.prior_observation_days))} days</dd>`,
  );
  parts.push(`</dl>`);

  const conceptSets = (definition.concept_sets as { set_id: string; name: string; items: unknown[] }[]) ?? [];
  parts.push(`<h4>concept sets</h4><ul class="form-sets">`);
  for (const cs of conceptSets) {
    parts.push(
      `<li><code>${escapeHtml(cs.set_id)}</code> ${escapeHtml(cs.name)} (${cs.items.length} items)</li>`,
    );
  }
  parts.push(`</ul>`);

  const entry = definition.entry as Record<string, unknown> | null;
  parts.push(`<h4>entry</h4>`);
  parts.push(`<p>${entry ? describeQuery(entry) : 'none'}</p>`);

  const rules = (definition.rules as Record<string, unknown>[]) ?? [];
  parts.push(`<h4>rules</h4><table class="form-rules"><thead><tr>`);
  parts.push(`<th>name</th><th>role</th><th>query</th><th>window (days from anchor)</th></tr></thead><tbody>`);
  rules.forEach((rule, i) => {
    const window = rule.window as { start_offset_days: number; end_offset_days: number; anchor: string };
    parts.push(
      `<tr><td>${escapeHtml(String(rule.name))}</td>` +
        `<td><span class="role role-${escapeHtml(String(rule.role))}">${escapeHtml(String(rule.role))}</span></td>` +
        `<td>${describeQuery(rule.query as Record<string, unknown>)}</td>` +
        `<td>${windowInput(`rules.${i}.window.start_offset_days`, window.start_offset_days)}` +
        ` to ${windowInput(`rules.${i}.window.end_offset_days`, window.end_offset_days)}` +
        ` of ${escapeHtml(window.anchor)}</td></tr>`,
    );
  });
  parts.push(`</tbody></table>`);

  const exitDoc = definition.exit as Record<string, unknown> | null;
  parts.push(`<h4>exit</h4>`);
  if (!exitDoc) {
    parts.push(`<p>none</p>`);
  } else if (exitDoc.kind === 'fixed_offset') {
    parts.push(`<p>fixed offset of ${windowInput('exit.days', Number(exitDoc.days))} days</p>`);
  } else if (exitDoc.kind === 'end_of_continuous_exposure') {
    parts.push(
      `<p>end of continuous exposure to <code>${escapeHtml(String(exitDoc.concept_set_ref))}</code>` +
        ` (persistence gap ${windowInput('exit.persistence_gap_days', Number(exitDoc.persistence_gap_days))} days)</p>`,
    );
  } else {
    parts.push(`<p>event based: ${describeQuery(exitDoc.query as Record<string, unknown>)}</p>`);
  }

  parts.push(`<button id="apply-form" class="secondary">apply to text</button>`);
  return `<div class="form-view">${parts.join('')}</div>`;
}

// -- lint panel -----------------------------------------------------------------

export function renderLintPanel(lint: ChecklistDoc): string {
  const rows = lint.items
    .map(
      (item) =>
        `<tr class="${item.passed ? 'lint-pass' : 'lint-fail'}">` +
        `<td>${item.passed ? 'pass' : 'fail'}</td>` +
        `<td>${escapeHtml(item.name)}</td>` +
        `<td>${escapeHtml(item.detail)}</td></tr>`,
    )
    .join('');
  const verdict = lint.passed ? 'all checks passed' : 'checks failing';
  return (
    `<div class="lint-panel"><p class="${lint.passed ? 'lint-pass' : 'lint-fail'}">${verdict}` +
    ` (dataset ${escapeHtml(lint.dataset_id)})</p>` +
    `<table><tbody>${rows}</tbody></table>${renderIssueList(lint.issues)}</div>`
  );
}

// -- run view ---------------------------------------------------------------------

export function renderFunnel(attrition: AttritionDoc): string {
  const stages = attrition.stages;
  const denom = stages.length > 0 ? Math.max(stages[0].remaining, 1) : 1;
  const rows = stages
    .map((stage) => {
      // width is presentation; the printed numbers are the document's
      const pct = Math.max((stage.remaining / denom) * 100, 0.5);
      return (
        `<div class="funnel-stage">` +
        `<div class="funnel-label">${escapeHtml(stage.name)}</div>` +
        `<div class="funnel-bar-track"><div class="funnel-bar" style="width:${pct.toFixed(1)}%"></div></div>` +
        `<div class="funnel-counts">remaining <b>${stage.remaining}</b>, removed <b>${stage.removed}</b></div>` +
        `</div>`
      );
    })
    .join('');
  return `<div class="funnel">${rows}</div>`;
}

export function renderStrengtheners(attrition: AttritionDoc): string {
  if (attrition.strengtheners.length === 0) {
    return `<p class="muted">no strengtheners in this definition</p>`;
  }
  const rows = attrition.strengtheners
    .map(
      (s) =>
        `<tr><td>${escapeHtml(s.name)}</td><td>${s.count}</td>` +
        `<td>${s.fraction === null ? 'n/a' : s.fraction}</td></tr>`,
    )
    .join('');
  return (
    `<table class="strengtheners"><thead><tr><th>strengthener</th><th>entries supported</th>` +
    `<th>fraction of cohort</th></tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function renderRunColumn(run: RunSummary, heading: string): string {
  const warnings =
    run.warnings.length > 0
      ? `<ul class="warnings">${run.warnings.map((w) => `<li>${escapeHtml(w)}</li>`).join('')}</ul>`
      : '';
  return (
    `<div class="run-column">` +
    `<h3>${escapeHtml(heading)}</h3>` +
    `<p class="run-meta">run <code>${escapeHtml(run.run_id)}</code> on <b>${escapeHtml(run.dataset_id)}</b>` +
    `${run.cached ? ' (cached)' : ''}</p>` +
    `<p class="cohort-size">cohort size <b>${run.cohort_size}</b></p>` +
    warnings +
    renderFunnel(run.attrition) +
    `<h4>strengthener impact</h4>` +
    renderStrengtheners(run.attrition) +
    `</div>`
  );
}

/** Up to the two most recent runs, newest on the left. */
export function renderRunComparison(runs: RunSummary[]): string {
  if (runs.length === 0) {
    return `<p class="muted">no runs yet</p>`;
  }
  const columns = runs.map((run, i) => renderRunColumn(run, i === 0 ? 'latest run' : 'previous run'));
  return `<div class="run-compare">${columns.join('')}</div>`;
}

// -- evaluation view ------------------------------------------------------------

const METRIC_ORDER = ['sensitivity', 'specificity', 'ppv', 'npv', 'f1'];

function metricCells(metrics: MetricsDoc): string {
  return METRIC_ORDER.map((k) => `<td>${formatMetric(metrics[k])}</td>`).join('');
}

export function renderStratumRow(stratum: StratumDoc, axes: string[], minCell: number): string {
  const axisCells = axes.map((a) => `<td>${escapeHtml(stratum.axes[a] ?? '')}</td>`).join('');
  if (stratum.suppressed) {
    // withheld cells must never leak values; only the size is published
    return (
      `<tr class="suppressed">${axisCells}<td>${stratum.n}</td>` +
      `<td colspan="${METRIC_ORDER.length}" class="suppressed-cell">suppressed (n &lt; ${minCell})</td></tr>`
    );
  }
  return `<tr>${axisCells}<td>${stratum.n}</td>${metricCells(stratum.metrics ?? {})}</tr>`;
}

export function renderEvaluation(report: EvaluationReport): string {
  const overall = report.overall;
  const overallRow =
    `<tr><td>overall</td><td>${overall.n}</td>${metricCells(overall.metrics)}</tr>`;
  const confusion = overall.confusion;
  const confusionLine =
    `<p class="confusion">tp ${confusion.tp}, fp ${confusion.fp}, ` +
    `fn ${confusion.fn}, tn ${confusion.tn}</p>`;

  const axes = report.strata.length > 0 ? Object.keys(report.strata[0].axes) : [];
  const headCells =
    axes.map((a) => `<th>${escapeHtml(a)}</th>`).join('') +
    `<th>n</th>` +
    METRIC_ORDER.map((m) => `<th>${m}</th>`).join('');
  const strataRows = report.strata
    .map((s) => renderStratumRow(s, axes, report.min_cell))
    .join('');

  return (
    `<div class="evaluation">` +
    `<h3>evaluation against <code>${escapeHtml(report.condition)}</code></h3>` +
    confusionLine +
    `<table class="metrics-table"><thead><tr><th>stratum</th><th>n</th>` +
    METRIC_ORDER.map((m) => `<th>${m}</th>`).join('') +
    `</tr></thead><tbody>${overallRow}</tbody></table>` +
    (report.strata.length > 0
      ? `<h4>strata (cells under ${report.min_cell} suppressed)</h4>` +
        `<table class="metrics-table"><thead><tr>${headCells}</tr></thead><tbody>${strataRows}</tbody></table>`
      : `<p class="muted">no strata requested</p>`) +
    `</div>`
  );
}

// -- history view ----------------------------------------------------------------

export function renderVersionList(versions: VersionEntry[], selected: number | null): string {
  const rows = versions
    .map(
      (v) =>
        `<tr class="${v.version === selected ? 'selected' : ''}" data-version="${v.version}">` +
        `<td>v${v.version}</td><td>${escapeHtml(v.author)}</td>` +
        `<td>${escapeHtml(v.timestamp)}</td><td>${escapeHtml(v.change_note)}</td></tr>`,
    )
    .join('');
  return (
    `<table class="version-list"><thead><tr><th>version</th><th>author</th>` +
    `<th>registered</th><th>change note</th></tr></thead><tbody>${rows}</tbody></table>`
  );
}

function diffValue(value: unknown): string {
  return value === undefined ? '' : `<code>${escapeHtml(JSON.stringify(value))}</code>`;
}

export function renderDiff(diff: DiffDoc): string {
  if (diff.changes.length === 0) {
    return `<p class="muted">versions ${diff.a} and ${diff.b} are identical</p>`;
  }
  const rows = diff.changes
    .map(
      (c) =>
        `<tr class="diff-${c.kind}"><td>${escapeHtml(c.path)}</td><td>${c.kind}</td>` +
        `<td>${diffValue(c.from)}</td><td>${diffValue(c.to)}</td></tr>`,
    )
    .join('');
  return (
    `<h4>v${diff.a} to v${diff.b}</h4>` +
    `<table class="diff-table"><thead><tr><th>field</th><th>kind</th><th>from</th><th>to</th>` +
    `</tr></thead><tbody>${rows}</tbody></table>`
  );
}

/** Inline SVG line chart of recorded PPV per evaluation, in server order. */
export function renderPpvChart(points: MonitorPoint[]): string {
  if (points.length === 0) {
    return `<p class="muted">no recorded evaluations yet</p>`;
  }
  const width = 560;
  const height = 160;
  const pad = 24;
  const innerW = width - 2 * pad;
  const innerH = height - 2 * pad;
  const step = points.length > 1 ? innerW / (points.length - 1) : 0;
  const x = (i: number) => pad + (points.length > 1 ? i * step : innerW / 2);
  // ppv is a proportion; a fixed 0..1 axis keeps charts comparable
  const y = (ppv: number) => pad + (1 - ppv) * innerH;

  const markers: string[] = [];
  const lineParts: string[] = [];
  points.forEach((p, i) => {
    if (p.ppv === null) {
      markers.push(
        `<text x="${x(i).toFixed(1)}" y="${(height - 6).toFixed(1)}" class="chart-null">n/a</text>`,
      );
      return;
    }
    lineParts.push(`${x(i).toFixed(1)},${y(p.ppv).toFixed(1)}`);
    markers.push(
      `<circle cx="${x(i).toFixed(1)}" cy="${y(p.ppv).toFixed(1)}" r="3">` +
        `<title>v${p.version} on ${escapeHtml(p.dataset_id)} at ${escapeHtml(p.timestamp)}: ppv ${p.ppv}</title></circle>`,
    );
    markers.push(
      `<text x="${x(i).toFixed(1)}" y="${(y(p.ppv) - 8).toFixed(1)}" class="chart-label">${p.ppv}</text>`,
    );
  });
  const polyline =
    lineParts.length > 1 ? `<polyline points="${lineParts.join(' ')}" class="chart-line"/>` : '';
  return (
    `<svg class="ppv-chart" viewBox="0 0 ${width} ${height}" role="img" aria-label="ppv over time">` +
    `<line x1="${pad}" y1="${pad}" x2="${pad}" y2="${height - pad}" class="chart-axis"/>` +
    `<line x1="${pad}" y1="${height - pad}" x2="${width - pad}" y2="${height - pad}" class="chart-axis"/>` +
    `<text x="4" y="${pad + 4}" class="chart-tick">1.0</text>` +
    `<text x="4" y="${height - pad}" class="chart-tick">0.0</text>` +
    polyline +
    markers.join('') +
    `</svg>`
  );
}

export function renderHistoryView(
  history: HistoryDoc,
  diff: DiffDoc | null,
  points: MonitorPoint[] | null,
): string {
  return (
    `<div class="history">` +
    `<h3>versions of <code>${escapeHtml(history.definition_id)}</code></h3>` +
    renderVersionList(history.versions, null) +
    `<p class="muted">pick two versions to compare: ` +
    `<input type="number" id="diff-a" min="1" value="1" class="diff-pick"> and ` +
    `<input type="number" id="diff-b" min="1" value="${
      history.versions.length > 0 ? history.versions[history.versions.length - 1].version : 1
    }" class="diff-pick"> ` +
    `<button id="load-diff" class="secondary">diff</button></p>` +
    `<div id="diff-panel">${diff ? renderDiff(diff) : ''}</div>` +
    `<h4>recorded ppv over time</h4>` +
    (points ? renderPpvChart(points) : `<p class="muted">loading…</p>`) +
    `</div>`
  );
}

// -- misc --------------------------------------------------------------------------

export function renderDatasetOptions(datasets: DatasetInfo[], selected: string | null): string {
  return datasets
    .map(
      (d) =>
        `<option value="${escapeHtml(d.dataset_id)}"${d.dataset_id === selected ? ' selected' : ''}>` +
        `${escapeHtml(d.dataset_id)} (${d.n_persons} persons, ${d.n_events} events)</option>`,
    )
    .join('');
}

export function renderCohortPage(page: CohortPage): string {
  const rows = page.rows
    .map(
      (r) =>
        `<tr><td>${r.person_id}</td><td>${escapeHtml(r.entry_date)}</td>` +
        `<td>${escapeHtml(r.exit_date)}</td></tr>`,
    )
    .join('');
  const last = Math.max(1, Math.ceil(page.total / page.page_size));
  return (
    `<table class="cohort-table"><thead><tr><th>person</th><th>entry</th><th>exit</th>` +
    `</tr></thead><tbody>${rows}</tbody></table>` +
    `<p class="pager">page ${page.page} of ${last} (${page.total} members)` +
    ` <button id="cohort-prev" class="secondary" ${page.page <= 1 ? 'disabled' : ''}>prev</button>` +
    ` <button id="cohort-next" class="secondary" ${page.page >= last ? 'disabled' : ''}>next</button></p>`
  );
}

export function renderErrorPanel(errors: Issue[]): string {
  if (errors.length === 0) {
    return '';
  }
  return `<div class="error-panel"><b>request failed</b>${renderIssueList(errors)}</div>`;
}
