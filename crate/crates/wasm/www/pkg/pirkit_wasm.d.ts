/* tslint:disable */
/* eslint-disable */

export class SynthDemo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Names accepted by [`SynthDemo::layer`].
     */
    layerNames(): string[];
    /**
     * RGBA bytes of a layer, ready for `ImageData`.
     */
    layer(name: string): Uint8Array;
    constructor(size: number, amplitude: number, width: number, radius: number, sigma: number, beta: number, gamma: number, bin_width: number);
    /**
     * The experiment report as JSON.
     */
    report(): string;
    readonly size: number;
}

/**
 * JSON summary of a single-voxel distribution; see [`VoxelSummary`].
 */
export function explorePushforward(probs: Float64Array, labels: Float64Array, bin_width: number): string;

/**
 * Report of figure 1, 2 or 5 as JSON.
 */
export function reproduceFigure(figure: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_synthdemo_free: (a: number, b: number) => void;
    readonly explorePushforward: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly reproduceFigure: (a: number) => [number, number, number, number];
    readonly synthdemo_layer: (a: number, b: number, c: number) => [number, number, number, number];
    readonly synthdemo_layerNames: (a: number) => [number, number];
    readonly synthdemo_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
    readonly synthdemo_report: (a: number) => [number, number, number, number];
    readonly synthdemo_size: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_drop_slice: (a: number, b: number) => void;
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
