/* tslint:disable */
/* eslint-disable */

/**
 * Grows a shape toward one of the toy classifier's classes, a few Adam
 * steps per call.
 */
export class GenerateSession {
    free(): void;
    [Symbol.dispose](): void;
    coeffs_json(): string;
    /**
     * The classifier's view: 32×32 grayscale bytes, top row first.
     */
    mask(): Uint8Array;
    constructor(target: number, order: number, seed: bigint, lambda_reg: number);
    /**
     * Runs `steps` updates; returns the last step's losses and class probabilities as JSON.
     */
    step(steps: number): string;
    steps_taken(): number;
}

export function class_names(): string;

/**
 * Spectrum, regularizer state and SVG outline of a coefficient file, as JSON.
 */
export function inspect(coeffs_json: string, lambda: number, gamma: number): string;

/**
 * Rasterizes a coefficient file (`{"K": .., "coeffs": [[a, b], ...]}`) on a
 * `size × size` canvas; returns row-major grayscale bytes, top row first.
 */
export function render_mask(coeffs_json: string, size: number): Uint8Array;

/**
 * Coefficient file of one of the template silhouettes.
 */
export function template(_class: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_generatesession_free: (a: number, b: number) => void;
    readonly class_names: () => [number, number];
    readonly generatesession_coeffs_json: (a: number) => [number, number];
    readonly generatesession_mask: (a: number) => [number, number, number, number];
    readonly generatesession_new: (a: number, b: number, c: bigint, d: number) => [number, number, number];
    readonly generatesession_step: (a: number, b: number) => [number, number, number, number];
    readonly generatesession_steps_taken: (a: number) => number;
    readonly inspect: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly render_mask: (a: number, b: number, c: number) => [number, number, number, number];
    readonly template: (a: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
