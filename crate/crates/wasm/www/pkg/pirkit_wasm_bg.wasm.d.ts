/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_synthdemo_free: (a: number, b: number) => void;
export const explorePushforward: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const reproduceFigure: (a: number) => [number, number, number, number];
export const synthdemo_layer: (a: number, b: number, c: number) => [number, number, number, number];
export const synthdemo_layerNames: (a: number) => [number, number];
export const synthdemo_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
export const synthdemo_report: (a: number) => [number, number, number, number];
export const synthdemo_size: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_drop_slice: (a: number, b: number) => void;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
