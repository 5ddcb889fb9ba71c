/* tslint:disable */
/* eslint-disable */

/**
 * A growing network on 2-D points.
 */
export class GwrDemo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Edges as interleaved neuron index pairs.
     */
    edges(): Uint32Array;
    /**
     * `epochs` passes over interleaved `x, y` coordinates.
     */
    fit(xy: Float64Array, epochs: number): void;
    neuron_count(): number;
    constructor(a_t: number, max_edge_age: number);
    /**
     * One adaptation step; returns true when a neuron was inserted.
     */
    step(x: number, y: number): boolean;
    /**
     * Neuron weights as interleaved `x, y`.
     */
    weights(): Float64Array;
}

/**
 * Modulator over `n` evenly spaced perceived valences in [0, 1], as
 * interleaved `M, reps`.
 */
export function modulator_curve(v_m: number, strength: number, n: number): Float64Array;

/**
 * 26 x 35 cepstral map of a one-second tone, coefficient-major.
 */
export function tone_mfcc(freq: number, amplitude: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_gwrdemo_free: (a: number, b: number) => void;
    readonly gwrdemo_edges: (a: number) => [number, number];
    readonly gwrdemo_fit: (a: number, b: number, c: number, d: number) => [number, number];
    readonly gwrdemo_neuron_count: (a: number) => number;
    readonly gwrdemo_new: (a: number, b: number) => [number, number, number];
    readonly gwrdemo_step: (a: number, b: number, c: number) => [number, number, number];
    readonly gwrdemo_weights: (a: number) => [number, number];
    readonly modulator_curve: (a: number, b: number, c: number) => [number, number, number, number];
    readonly tone_mfcc: (a: number, b: number) => [number, number, number, number];
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
