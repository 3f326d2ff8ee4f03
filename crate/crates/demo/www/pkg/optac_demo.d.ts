/* tslint:disable */
/* eslint-disable */

export class CurveView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly alpha: number;
    readonly bonusValue: Float64Array;
    readonly eta: number;
    readonly gap: Float64Array;
    readonly mixtureGap: Float64Array;
    readonly vStar: number;
}

export class DensityView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly estimate: Float64Array;
    readonly maxErr: number;
    readonly truth: Float64Array;
    readonly xs: Float64Array;
}

export class FieldView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly samples: Float64Array;
    readonly size: number;
    readonly values: Float64Array;
}

export function bonusField(n: number, angle: number, spread: number, alpha: number, lambda: number, size: number, seed: number): FieldView;

export function densityCurve(sd: number, radius: number, d: number, n: number, seed: number, points: number): DensityView;

export function learningCurve(iterations: number, alpha: number | null | undefined, eta: number | null | undefined, seed: number): CurveView;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_curveview_free: (a: number, b: number) => void;
    readonly __wbg_densityview_free: (a: number, b: number) => void;
    readonly __wbg_fieldview_free: (a: number, b: number) => void;
    readonly bonusField: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
    readonly curveview_alpha: (a: number) => number;
    readonly curveview_bonusValue: (a: number) => [number, number];
    readonly curveview_eta: (a: number) => number;
    readonly curveview_gap: (a: number) => [number, number];
    readonly curveview_mixtureGap: (a: number) => [number, number];
    readonly curveview_vStar: (a: number) => number;
    readonly densityCurve: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly densityview_estimate: (a: number) => [number, number];
    readonly densityview_truth: (a: number) => [number, number];
    readonly densityview_xs: (a: number) => [number, number];
    readonly fieldview_samples: (a: number) => [number, number];
    readonly fieldview_size: (a: number) => number;
    readonly fieldview_values: (a: number) => [number, number];
    readonly learningCurve: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly densityview_maxErr: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
