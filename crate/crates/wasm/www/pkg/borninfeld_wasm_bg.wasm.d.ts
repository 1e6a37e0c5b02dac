/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_add_charge: (a: number, b: number, c: number, d: number) => [number, number];
export const demo_charges: (a: number) => [number, number];
export const demo_clear: (a: number) => void;
export const demo_energy: (a: number) => [number, number, number, number];
export const demo_heights: (a: number) => [number, number, number, number];
export const demo_light_segments: (a: number, b: number) => [number, number, number, number];
export const demo_new: (a: number) => [number, number, number];
export const demo_nodes: (a: number) => number;
export const demo_solve: (a: number, b: number) => [number, number, number, number];
export const __externref_table_alloc: () => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
