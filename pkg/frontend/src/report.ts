// Render evaluation report records into a per-instance segment table.

export interface ReportRecord {
  kind: string;
  report: string;
  task?: string;
  mean_success?: number;
  stderr?: number;
  n_instances?: number;
  instance?: number;
  success?: number;
  segments?: Record<string, boolean>;
  [key: string]: unknown;
}

export interface SegmentTable {
  task: string;
  meanSuccess: number;
  stderr: number;
  segmentNames: string[];
  rows: { instance: number; success: number; segments: boolean[] }[];
}

/** Parse the line-record format: a header line then one JSON per line. */
export function parseRecordFile(text: string): ReportRecord[] {
  const lines = text.split("\n").filter((l) => l.trim().length > 0);
  if (lines[0] !== "l2d2-dataset v1") {
    throw new Error(`unexpected header: ${lines[0]}`);
  }
  return lines.slice(1).map((l) => JSON.parse(l) as ReportRecord);
}

export function buildSegmentTable(records: ReportRecord[]): SegmentTable {
  const summary = records.find(
    (r) => r.kind === "report" && r.report === "evaluation_summary"
  );
  if (!summary) throw new Error("no evaluation_summary record");
  const instances = records.filter(
    (r) => r.kind === "report" && r.report === "evaluation_instance"
  );
  const names = instances.length ? Object.keys(instances[0].segments ?? {}) : [];
  names.sort();
  return {
    task: String(summary.task),
    meanSuccess: Number(summary.mean_success),
    stderr: Number(summary.stderr),
    segmentNames: names,
    rows: instances.map((r) => ({
      instance: Number(r.instance),
      success: Number(r.success),
      segments: names.map((n) => Boolean((r.segments ?? {})[n])),
    })),
  };
}

/** Plain-HTML rendering used by the log panel. */
export function renderSegmentTable(table: SegmentTable): string {
  const head = ["instance", ...table.segmentNames, "success"]
    .map((h) => `<th>${h}</th>`)
    .join("");
  const body = table.rows
    .map((row) => {
      const cells = [
        `<td>${row.instance}</td>`,
        ...row.segments.map((ok) => `<td class="${ok ? "pass" : "fail"}">${ok ? "yes" : "no"}</td>`),
        `<td>${row.success.toFixed(2)}</td>`,
      ];
      return `<tr>${cells.join("")}</tr>`;
    })
    .join("");
  return (
    `<table class="segments" data-task="${table.task}">` +
    `<caption>${table.task}: mean ${table.meanSuccess.toFixed(2)} &plusmn; ${table.stderr.toFixed(2)}</caption>` +
    `<thead><tr>${head}</tr></thead><tbody>${body}</tbody></table>`
  );
}
