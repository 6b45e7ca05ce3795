/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_generatesession_free: (a: number, b: number) => void;
export const class_names: () => [number, number];
export const generatesession_coeffs_json: (a: number) => [number, number];
export const generatesession_mask: (a: number) => [number, number, number, number];
export const generatesession_new: (a: number, b: number, c: bigint, d: number) => [number, number, number];
export const generatesession_step: (a: number, b: number) => [number, number, number, number];
export const generatesession_steps_taken: (a: number) => number;
export const inspect: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const render_mask: (a: number, b: number, c: number) => [number, number, number, number];
export const template: (a: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
