/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    add_charge(x: number, y: number, b: number): void;
    /**
     * Flat `x, y, b` triples.
     */
    charges(): Float64Array;
    clear(): void;
    energy(): Float64Array;
    heights(): Float64Array;
    /**
     * Pass 0 for the default tolerance.
     */
    light_segments(tolerance: number): Float64Array;
    constructor(nodes: number);
    nodes(): number;
    solve(tolerance: number): string;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_add_charge: (a: number, b: number, c: number, d: number) => [number, number];
    readonly demo_charges: (a: number) => [number, number];
    readonly demo_clear: (a: number) => void;
    readonly demo_energy: (a: number) => [number, number, number, number];
    readonly demo_heights: (a: number) => [number, number, number, number];
    readonly demo_light_segments: (a: number, b: number) => [number, number, number, number];
    readonly demo_new: (a: number) => [number, number, number];
    readonly demo_nodes: (a: number) => number;
    readonly demo_solve: (a: number, b: number) => [number, number, number, number];
    readonly __externref_table_alloc: () => number;
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
