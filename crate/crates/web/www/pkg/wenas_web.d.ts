/* tslint:disable */
/* eslint-disable */

export class WeNetDemo {
    free(): void;
    [Symbol.dispose](): void;
    cellSvg(i: number): string | undefined;
    /**
     * JSON array of cell descriptions.
     */
    labels(): string;
    constructor(candidates: number, levels: number, seed: number);
    progress(): number;
    trainBatches(n: number): number;
    validPerplexity(): number;
    weights(): Float64Array;
}

/**
 * Draws a cell given as JSON or pairs text.
 */
export function drawCell(text: string): string;

/**
 * Samples a cell and returns `{ json, pairs, svg }` as a JSON string.
 */
export function sampleCell(levels: number, seed: number): string;

/**
 * Number of distinct cells with `levels` nodes, as a decimal string.
 */
export function spaceSize(levels: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_wenetdemo_free: (a: number, b: number) => void;
    readonly drawCell: (a: number, b: number) => [number, number, number, number];
    readonly sampleCell: (a: number, b: number) => [number, number, number, number];
    readonly spaceSize: (a: number) => [number, number, number, number];
    readonly wenetdemo_cellSvg: (a: number, b: number) => [number, number];
    readonly wenetdemo_labels: (a: number) => [number, number];
    readonly wenetdemo_new: (a: number, b: number, c: number) => [number, number, number];
    readonly wenetdemo_progress: (a: number) => number;
    readonly wenetdemo_trainBatches: (a: number, b: number) => [number, number, number];
    readonly wenetdemo_validPerplexity: (a: number) => [number, number, number];
    readonly wenetdemo_weights: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
