/* tslint:disable */
/* eslint-disable */

export class Curves {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly filtered_mean: Float64Array;
    readonly filtered_var: Float64Array;
    readonly smoothed_mean: Float64Array;
    readonly smoothed_var: Float64Array;
}

export class ToyFit {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Fitted trajectories with personas reordered to match the truth.
     */
    fitted(): Trajectories;
    truth(): Trajectories;
    /**
     * Author-persona accuracy under the best persona matching.
     */
    readonly accuracy: number;
    readonly converged: boolean;
    /**
     * Mean pairwise cosine between fitted trajectories.
     */
    readonly cosine: number;
    /**
     * Surrogate objective after every EM iteration.
     */
    readonly objective: Float64Array;
}

/**
 * Persona trajectories as T×P×K arrays, flattened row-major.
 */
export class Trajectories {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly alpha: Float64Array;
    readonly personas: number;
    /**
     * Softmax of each α_{t,p}.
     */
    readonly proportions: Float64Array;
    readonly steps: number;
    readonly topics: number;
}

/**
 * Filter and smooth one chain. `observed[t] == 0` marks a missing step.
 */
export function kalman_curves(obs: Float64Array, observed: Uint8Array, process_var: number, measurement_noise: number, mu0: number, sigma0: number): Curves;

/**
 * Draw persona trajectories from the Brownian prior.
 */
export function sample_trajectories(topics: number, personas: number, steps: number, process_noise: number, seed: bigint): Trajectories;

/**
 * Sample a small corpus with one dominant topic per persona and fit it.
 */
export function toy_fit(seed: bigint, rho: number, max_iters: number): ToyFit;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_curves_free: (a: number, b: number) => void;
    readonly __wbg_toyfit_free: (a: number, b: number) => void;
    readonly __wbg_trajectories_free: (a: number, b: number) => void;
    readonly curves_filtered_mean: (a: number) => [number, number];
    readonly curves_filtered_var: (a: number) => [number, number];
    readonly curves_smoothed_mean: (a: number) => [number, number];
    readonly curves_smoothed_var: (a: number) => [number, number];
    readonly kalman_curves: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
    readonly sample_trajectories: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
    readonly toy_fit: (a: bigint, b: number, c: number) => [number, number, number];
    readonly toyfit_accuracy: (a: number) => number;
    readonly toyfit_converged: (a: number) => number;
    readonly toyfit_cosine: (a: number) => number;
    readonly toyfit_fitted: (a: number) => number;
    readonly toyfit_objective: (a: number) => [number, number];
    readonly toyfit_truth: (a: number) => number;
    readonly trajectories_alpha: (a: number) => [number, number];
    readonly trajectories_personas: (a: number) => number;
    readonly trajectories_proportions: (a: number) => [number, number];
    readonly trajectories_steps: (a: number) => number;
    readonly trajectories_topics: (a: number) => number;
    readonly __externref_table_alloc: () => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
