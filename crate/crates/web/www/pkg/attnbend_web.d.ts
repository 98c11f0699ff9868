/* tslint:disable */
/* eslint-disable */

/**
 * One decoded frame and one token's attention map from a small bent generation.
 */
export class GenerationPreview {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly attentionHeight: number;
    readonly attentionWidth: number;
    /**
     * RGBA heat map of the recorded token at the last timestep, middle latent frame.
     */
    readonly attention: Uint8Array;
    /**
     * RGBA of the middle output frame.
     */
    readonly frame: Uint8Array;
    readonly height: number;
    readonly token: string;
    readonly width: number;
}

export function bendPreview(operation: string, parameter: string, value: number, strength: number, padding: string, width: number, height: number): Uint8Array;

export function countVariations(config: string): Uint32Array;

export function generatePreview(prompt: string, seed: number, operation: string, parameter: string, value: number, strength: number, tokens: string, layers: string): GenerationPreview;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_generationpreview_free: (a: number, b: number) => void;
    readonly bendPreview: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number) => [number, number, number, number];
    readonly countVariations: (a: number, b: number) => [number, number, number, number];
    readonly generatePreview: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: number, l: number, m: number) => [number, number, number];
    readonly generationpreview_attention: (a: number) => [number, number];
    readonly generationpreview_attentionHeight: (a: number) => number;
    readonly generationpreview_attentionWidth: (a: number) => number;
    readonly generationpreview_frame: (a: number) => [number, number];
    readonly generationpreview_height: (a: number) => number;
    readonly generationpreview_token: (a: number) => [number, number];
    readonly generationpreview_width: (a: number) => number;
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
