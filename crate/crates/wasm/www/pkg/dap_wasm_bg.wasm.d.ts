/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_curves_free: (a: number, b: number) => void;
export const __wbg_toyfit_free: (a: number, b: number) => void;
export const __wbg_trajectories_free: (a: number, b: number) => void;
export const curves_filtered_mean: (a: number) => [number, number];
export const curves_filtered_var: (a: number) => [number, number];
export const curves_smoothed_mean: (a: number) => [number, number];
export const curves_smoothed_var: (a: number) => [number, number];
export const kalman_curves: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
export const sample_trajectories: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
export const toy_fit: (a: bigint, b: number, c: number) => [number, number, number];
export const toyfit_accuracy: (a: number) => number;
export const toyfit_converged: (a: number) => number;
export const toyfit_cosine: (a: number) => number;
export const toyfit_fitted: (a: number) => number;
export const toyfit_objective: (a: number) => [number, number];
export const toyfit_truth: (a: number) => number;
export const trajectories_alpha: (a: number) => [number, number];
export const trajectories_personas: (a: number) => number;
export const trajectories_proportions: (a: number) => [number, number];
export const trajectories_steps: (a: number) => number;
export const trajectories_topics: (a: number) => number;
export const __externref_table_alloc: () => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
