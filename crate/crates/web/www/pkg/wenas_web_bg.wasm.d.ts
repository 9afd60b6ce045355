/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_wenetdemo_free: (a: number, b: number) => void;
export const drawCell: (a: number, b: number) => [number, number, number, number];
export const sampleCell: (a: number, b: number) => [number, number, number, number];
export const spaceSize: (a: number) => [number, number, number, number];
export const wenetdemo_cellSvg: (a: number, b: number) => [number, number];
export const wenetdemo_labels: (a: number) => [number, number];
export const wenetdemo_new: (a: number, b: number, c: number) => [number, number, number];
export const wenetdemo_progress: (a: number) => number;
export const wenetdemo_trainBatches: (a: number, b: number) => [number, number, number];
export const wenetdemo_validPerplexity: (a: number) => [number, number, number];
export const wenetdemo_weights: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
