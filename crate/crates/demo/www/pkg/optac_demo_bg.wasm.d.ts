/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_curveview_free: (a: number, b: number) => void;
export const __wbg_densityview_free: (a: number, b: number) => void;
export const __wbg_fieldview_free: (a: number, b: number) => void;
export const bonusField: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
export const curveview_alpha: (a: number) => number;
export const curveview_bonusValue: (a: number) => [number, number];
export const curveview_eta: (a: number) => number;
export const curveview_gap: (a: number) => [number, number];
export const curveview_mixtureGap: (a: number) => [number, number];
export const curveview_vStar: (a: number) => number;
export const densityCurve: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const densityview_estimate: (a: number) => [number, number];
export const densityview_truth: (a: number) => [number, number];
export const densityview_xs: (a: number) => [number, number];
export const fieldview_samples: (a: number) => [number, number];
export const fieldview_size: (a: number) => number;
export const fieldview_values: (a: number) => [number, number];
export const learningCurve: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const densityview_maxErr: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
