import { describe, expect, it } from "vitest";

import { column, MissingColumnError, parseCsv, requireColumns } from "../src/csv.js";

describe("csv parsing", () => {
  it("parses header and numeric rows", () => {
    const t = parseCsv("t,mass\n0,1\n0.5,0.99\n");
    expect(t.columns).toEqual(["t", "mass"]);
    expect(t.rows).toEqual([
      [0, 1],
      [0.5, 0.99],
    ]);
  });

  it("reads columns by name", () => {
    const t = parseCsv("a,b\n1,2\n3,4\n");
    expect(column(t, "b")).toEqual([2, 4]);
  });

  it("names missing columns explicitly", () => {
    const t = parseCsv("a,b\n1,2\n");
    expect(() => column(t, "zeta", "x.csv")).toThrowError(MissingColumnError);
    expect(() => requireColumns(t, ["a", "zeta"], "x.csv")).toThrowError(
      /missing required column 'zeta'/,
    );
  });

  it("rejects ragged rows", () => {
    expect(() => parseCsv("a,b\n1\n")).toThrowError(/expected 2/);
  });

  it("rejects empty tables", () => {
    expect(() => parseCsv("", "empty.csv")).toThrowError(/empty/);
  });

  it("parses exponent notation and nan", () => {
    const t = parseCsv("v\n1.5e-3\nnan\n");
    expect(t.rows[0][0]).toBeCloseTo(1.5e-3);
    expect(Number.isNaN(t.rows[1][0])).toBe(true);
  });
});
