import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";
import {
  buildSegmentTable,
  parseRecordFile,
  renderSegmentTable,
} from "../src/report.js";

const fixtureText = readFileSync(
  new URL("../../fixtures/eval_report_fixture.l2d2", import.meta.url),
  "utf-8"
);

describe("report rendering from the fixture file", () => {
  it("parses the record file", () => {
    const records = parseRecordFile(fixtureText);
    expect(records[0].report).toBe("evaluation_summary");
    expect(records.length).toBe(5);
  });

  it("builds a per-instance segment table", () => {
    const table = buildSegmentTable(parseRecordFile(fixtureText));
    expect(table.task).toBe("lift");
    expect(table.segmentNames).toEqual(["lift_cube", "reach_cube"]);
    expect(table.rows.length).toBe(4);
    expect(table.rows[0].segments).toEqual([false, false]);
  });

  it("renders one row per instance with pass/fail cells", () => {
    const html = renderSegmentTable(buildSegmentTable(parseRecordFile(fixtureText)));
    expect(html).toContain('data-task="lift"');
    expect((html.match(/<tr>/g) ?? []).length).toBe(5); // header + 4 instances
    expect(html).toContain("reach_cube");
    expect(html).toContain('class="fail"');
  });

  it("rejects files without the format header", () => {
    expect(() => parseRecordFile("nonsense\n{}")).toThrow();
  });
});
