/**
 * Typed handles over the rfcl bridge: the two curriculum schedulers and the
 * pointmaze environment, driven in a Python child process so every decision
 * is made by the primary implementation (no scheduler logic lives here).
 *
 * Usage:
 * ```typescript
 * const bridge = await RfclBridge.connect();
 * const reverse = await bridge.reverseCurriculum("demos.rfcl", 0);
 * const { demo, step, offset, timelimit } = await reverse.sampleStart();
 * await reverse.recordEpisode(demo, offset, true);
 * bridge.close();
 * ```
 *
 * Handles are not thread-safe; await each call before issuing the next.
 * Numeric fields cross the boundary as JSON doubles, so integers above
 * 2^53 - 1 (e.g. caller-chosen level ids) lose precision.
 */

import { BRIDGE_ABI, BridgeError, BridgeProcess, type BridgeProcessOptions } from "./protocol.js";

export { BRIDGE_ABI, BridgeError, BridgeProcess };

export interface ReverseParams {
  delta?: number;
  m?: number;
  phi?: number;
  p_geom?: number;
  dynamic_timelimit?: boolean;
  episode_horizon?: number;
}

export interface ForwardParams {
  n_levels?: number;
  num_demos?: number;
  k?: number;
  omega?: number;
  beta?: number;
  staleness_coef?: number;
}

export interface StartSample {
  demo: number;
  step: number;
  offset: number;
  timelimit: number;
}

export interface LevelSample {
  index: number;
  level_id: number;
}

export interface AdvancementEvent {
  demo?: number;
  event: string;
  start_step?: number;
  u?: number;
}

export interface StepResult {
  obs: number[];
  reward: number;
  terminal: boolean;
  truncated: boolean;
}

export class ReverseCurriculumHandle {
  constructor(private readonly proc: BridgeProcess, readonly numDemos: number) {}

  sampleStart(): Promise<StartSample> {
    return this.proc.call("reverse.sample_start");
  }

  async recordEpisode(demo: number, offset: number, success: boolean): Promise<AdvancementEvent | null> {
    const out = await this.proc.call<{ event: AdvancementEvent | null }>(
      "reverse.record_episode", { demo, offset, success });
    return out.event;
  }

  async isComplete(): Promise<boolean> {
    const out = await this.proc.call<{ complete: boolean }>("reverse.is_complete");
    return out.complete;
  }
}

export class ForwardCurriculumHandle {
  constructor(private readonly proc: BridgeProcess, readonly poolSize: number) {}

  sampleLevel(): Promise<LevelSample> {
    return this.proc.call("forward.sample_level");
  }

  async recordOutcome(index: number, nonzeroReturn: boolean): Promise<number> {
    const out = await this.proc.call<{ episode_count: number }>(
      "forward.record_outcome", { index, nonzero_return: nonzeroReturn });
    return out.episode_count;
  }

  async scores(): Promise<number[]> {
    const out = await this.proc.call<{ scores: number[] }>("forward.scores");
    return out.scores;
  }
}

export class MazeEnvHandle {
  constructor(private readonly proc: BridgeProcess, readonly envId: string) {}

  async resetLevel(levelId: number): Promise<number[]> {
    const out = await this.proc.call<{ obs: number[] }>("env.reset_level", { level_id: levelId });
    return out.obs;
  }

  step(action: number[]): Promise<StepResult> {
    return this.proc.call("env.step", { action });
  }

  /** Opaque simulator state as a hex string; feed back into setState. */
  async getState(): Promise<string> {
    const out = await this.proc.call<{ state: string }>("env.get_state");
    return out.state;
  }

  async setState(state: string): Promise<number[]> {
    const out = await this.proc.call<{ obs: number[] }>("env.set_state", { state });
    return out.obs;
  }
}

export class RfclBridge {
  private constructor(private readonly proc: BridgeProcess) {}

  /** Spawn the server and verify its ABI string before handing out handles. */
  static async connect(options: BridgeProcessOptions = {}): Promise<RfclBridge> {
    const proc = new BridgeProcess(options);
    let abi: string;
    try {
      abi = (await proc.call<{ abi: string }>("abi")).abi;
    } catch (e) {
      proc.close();
      throw e;
    }
    if (abi !== BRIDGE_ABI) {
      proc.close();
      throw new BridgeError("AbiMismatch", `server speaks ${abi}, client expects ${BRIDGE_ABI}`);
    }
    return new RfclBridge(proc);
  }

  async reverseCurriculum(demosPath: string, seed: number,
                          params: ReverseParams = {}): Promise<ReverseCurriculumHandle> {
    const out = await this.proc.call<{ num_demos: number }>(
      "reverse.init", { demos_path: demosPath, seed, params });
    return new ReverseCurriculumHandle(this.proc, out.num_demos);
  }

  async forwardCurriculum(seed: number, params: ForwardParams = {}): Promise<ForwardCurriculumHandle> {
    const out = await this.proc.call<{ pool_size: number }>("forward.init", { seed, params });
    return new ForwardCurriculumHandle(this.proc, out.pool_size);
  }

  /** maze: "default" or an ASCII maze description. */
  async env(maze: string = "default"): Promise<MazeEnvHandle> {
    const out = await this.proc.call<{ env_id: string }>("env.init", { maze });
    return new MazeEnvHandle(this.proc, out.env_id);
  }

  /** Raw protocol escape hatch; used by the golden-trace parity tests. */
  call<T>(op: string, args: Record<string, unknown> = {}): Promise<T> {
    return this.proc.call(op, args);
  }

  close(): void {
    this.proc.close();
  }
}
