/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_generationpreview_free: (a: number, b: number) => void;
export const bendPreview: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number) => [number, number, number, number];
export const countVariations: (a: number, b: number) => [number, number, number, number];
export const generatePreview: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: number, l: number, m: number) => [number, number, number];
export const generationpreview_attention: (a: number) => [number, number];
export const generationpreview_attentionHeight: (a: number) => number;
export const generationpreview_attentionWidth: (a: number) => number;
export const generationpreview_frame: (a: number) => [number, number];
export const generationpreview_height: (a: number) => number;
export const generationpreview_token: (a: number) => [number, number];
export const generationpreview_width: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
