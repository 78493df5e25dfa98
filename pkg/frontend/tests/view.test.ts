import { describe, expect, it } from "vitest";

import { CaseOutputs, parseCaseOutputs } from "../src/types.js";
import { CompletionTracker, buildPanels, summarize } from "../src/view.js";

function outputsFor(letters: string[], caseId = "c1"): CaseOutputs {
  return parseCaseOutputs({
    case: { case_id: caseId, history: "h", physical_signs: "p", symptoms: "s",
            image_urls: [] },
    outputs: Object.fromEntries(
      letters.map((letter) => [
        letter,
        {
          description: `description ${letter}`,
          pathogenesis: `pathogenesis ${letter}`,
          syndrome: `syndrome ${letter}`,
          treatment: `treatment ${letter}`,
          prescription: `prescription ${letter}`,
        },
      ]),
    ),
  });
}

describe("panels", () => {
  it("two cases of five letters make ten panels", () => {
    const caseOne = buildPanels(outputsFor(["A", "B", "C", "D", "E"], "c1"));
    const caseTwo = buildPanels(outputsFor(["A", "B", "C", "D", "E"], "c2"));
    expect(caseOne.length + caseTwo.length).toBe(10);
    expect(new Set(caseOne.map((p) => p.caseId))).toEqual(new Set(["c1"]));
  });

  it("a sixth letter renders generically", () => {
    const panels = buildPanels(outputsFor(["A", "B", "C", "D", "E", "F"]));
    expect(panels.map((p) => p.letter)).toEqual(["A", "B", "C", "D", "E", "F"]);
    const f = panels[5]!;
    expect(f.fields.some((field) => field.text === "description F")).toBe(true);
  });

  it("each panel shows the five output fields in order", () => {
    const [panel] = buildPanels(outputsFor(["A"]));
    expect(panel!.fields.map((f) => f.label)).toEqual([
      "Lesion description",
      "Pathogenesis analysis",
      "Syndrome differentiation",
      "Treatment principle",
      "Prescription",
    ]);
  });

  it("missing fields render as empty text, verbatim otherwise", () => {
    const outputs = parseCaseOutputs({
      case: { case_id: "c1", history: "", physical_signs: "", symptoms: "",
              image_urls: [] },
      outputs: { A: { description: "<b>not markup</b>" } },
    });
    const [panel] = buildPanels(outputs);
    expect(panel!.fields[0]!.text).toBe("<b>not markup</b>");
    expect(panel!.fields[1]!.text).toBe("");
  });
});

describe("summary", () => {
  it("counts remaining work", () => {
    const summary = summarize([
      { case_id: "c1", letters: ["A", "B"], completed: { A: true, B: false } },
      { case_id: "c2", letters: ["A", "B"], completed: { A: false, B: false } },
    ]);
    expect(summary.caseCount).toBe(2);
    expect(summary.panelCount).toBe(4);
    expect(summary.remaining).toBe(3);
    expect(summary.allDone).toBe(false);
  });

  it("empty assignment list is all done", () => {
    expect(summarize([]).allDone).toBe(true);
  });

  it("fully completed is all done", () => {
    const summary = summarize([
      { case_id: "c1", letters: ["A"], completed: { A: true } },
    ]);
    expect(summary.allDone).toBe(true);
  });
});

describe("completion tracker", () => {
  it("optimistic mark then rollback on rejection", () => {
    const tracker = new CompletionTracker();
    tracker.seed([{ case_id: "c1", letters: ["A", "B"], completed: { A: false, B: false } }]);
    expect(tracker.isCompleted("c1", "A")).toBe(false);
    tracker.markPending("c1", "A");
    expect(tracker.isCompleted("c1", "A")).toBe(true);
    tracker.rollback("c1", "A");
    expect(tracker.isCompleted("c1", "A")).toBe(false);
  });

  it("confirm survives rollback of other letters", () => {
    const tracker = new CompletionTracker();
    tracker.seed([{ case_id: "c1", letters: ["A", "B"], completed: { A: false, B: false } }]);
    tracker.markPending("c1", "A");
    tracker.confirm("c1", "A");
    tracker.rollback("c1", "A");
    expect(tracker.isCompleted("c1", "A")).toBe(true);
  });

  it("seeds from server state", () => {
    const tracker = new CompletionTracker();
    tracker.seed([{ case_id: "c1", letters: ["A", "B"], completed: { A: true, B: false } }]);
    expect(tracker.isCompleted("c1", "A")).toBe(true);
    expect(tracker.isCompleted("c1", "B")).toBe(false);
  });
});
