/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_gwrdemo_free: (a: number, b: number) => void;
export const gwrdemo_edges: (a: number) => [number, number];
export const gwrdemo_fit: (a: number, b: number, c: number, d: number) => [number, number];
export const gwrdemo_neuron_count: (a: number) => number;
export const gwrdemo_new: (a: number, b: number) => [number, number, number];
export const gwrdemo_step: (a: number, b: number, c: number) => [number, number, number];
export const gwrdemo_weights: (a: number) => [number, number];
export const modulator_curve: (a: number, b: number, c: number) => [number, number, number, number];
export const tone_mfcc: (a: number, b: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
