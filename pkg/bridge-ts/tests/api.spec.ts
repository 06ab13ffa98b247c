/** Typed-handle contracts: ABI check, env surface, error translation. */

import { execFileSync } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { BridgeError, RfclBridge } from "../src/index.js";

const RFCL = process.env.RFCL_BIN ?? "rfcl";

let dir: string;
let demos: string;
let bridge: RfclBridge;

beforeAll(async () => {
  dir = mkdtempSync(join(tmpdir(), "rfcl-bridge-"));
  demos = join(dir, "demos.rfcl");
  execFileSync(RFCL, ["demo-gen", "--count", "1", "--seed", "7", "--out", demos]);
  bridge = await RfclBridge.connect();
});

afterAll(() => {
  bridge.close();
  rmSync(dir, { recursive: true, force: true });
});

describe("environment handle", () => {
  it("exposes reset/step/getState/setState with exact state restore", async () => {
    const env = await bridge.env("default");
    expect(env.envId).toMatch(/^pointmaze-8x8-/);
    const obs = await env.resetLevel(4242);
    expect(obs).toHaveLength(2);
    const state = await env.getState();
    const rolled: number[][] = [];
    for (let i = 0; i < 20; i++) {
      const r = await env.step([Math.sin(i), Math.cos(i)]);
      expect([0, 1]).toContain(r.reward);
      expect(typeof r.terminal).toBe("boolean");
      rolled.push(r.obs);
    }
    // setState(getState()) restores the exact pre-rollout state
    expect(await env.setState(state)).toEqual(obs);
    const replay = await env.step([Math.sin(0), Math.cos(0)]);
    expect(replay.obs).toEqual(rolled[0]);
  });

  it("accepts a custom ASCII maze", async () => {
    const env = await bridge.env("...\n...\nG..\n");
    expect(env.envId).toMatch(/^pointmaze-3x3-/);
  });
});

describe("reverse curriculum handle", () => {
  it("runs to completion and ignores further episodes", async () => {
    const reverse = await bridge.reverseCurriculum(demos, 0, { delta: 20, m: 1 });
    expect(reverse.numDemos).toBe(1);
    let guard = 0;
    while (!(await reverse.isComplete())) {
      const s = await reverse.sampleStart();
      expect(s.step).toBeGreaterThanOrEqual(0);
      expect(s.timelimit).toBeGreaterThanOrEqual(1);
      await reverse.recordEpisode(s.demo, s.offset, true);
      if (++guard > 500) throw new Error("curriculum failed to complete");
    }
    // recording against a complete demo is a warning upstream, not an error
    expect(await reverse.recordEpisode(0, 0, true)).toBeNull();
    expect(await reverse.isComplete()).toBe(true);
  });
});

describe("forward curriculum handle", () => {
  it("samples, records, and reports scores", async () => {
    const fwd = await bridge.forwardCurriculum(0, { n_levels: 10, num_demos: 1 });
    expect(fwd.poolSize).toBe(11);
    const s = await fwd.sampleLevel();
    expect(s.index).toBeGreaterThanOrEqual(0);
    expect(await fwd.recordOutcome(s.index, true)).toBe(1);
    const scores = await fwd.scores();
    expect(scores).toHaveLength(11);
    expect(scores[s.index]).toBe(1); // q = 1 >= omega
  });

  it("rejects an empty pool with the primary error code", async () => {
    await expect(bridge.forwardCurriculum(0, { n_levels: 0 }))
      .rejects.toMatchObject({ name: "BridgeError", code: "ValueError" });
  });
});

describe("error translation", () => {
  it("surfaces demo container errors with their primary type", async () => {
    try {
      await bridge.reverseCurriculum(join(dir, "missing.rfcl"), 0);
      expect.unreachable();
    } catch (e) {
      expect(e).toBeInstanceOf(BridgeError);
      expect((e as BridgeError).code).toBe("FileNotFoundError");
    }
  });

  it("rejects unknown operations", async () => {
    await expect(bridge.call("no.such.op")).rejects.toMatchObject({ code: "ValueError" });
  });
});
