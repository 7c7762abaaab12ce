/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    constructor(surface_name: string, width: number, height: number, seed: bigint);
    /**
     * Places the camera on a sphere of radius 3 around the origin.
     */
    orbit(yaw_deg: number, pitch_deg: number): void;
    /**
     * Hit point and curvature under a pixel as
     * `[x, y, z, kappa1, kappa2, gaussian, mean]`, or empty on a miss.
     */
    pick(col: number, row: number, network: boolean): Float64Array;
    /**
     * RGBA pixels, row-major from the top, ready for `ImageData`.
     * `network` selects the trained network instead of the exact surface.
     */
    render(mode: string, network: boolean): Uint8Array;
    /**
     * Switches the surface and discards any trained network.
     */
    set_surface(name: string): void;
    steps_taken(): number;
    /**
     * Runs `steps` Adam steps on the network, creating it on first use.
     * Returns the last total loss.
     */
    train(steps: number): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
    readonly demo_orbit: (a: number, b: number, c: number) => void;
    readonly demo_pick: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_render: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_set_surface: (a: number, b: number, c: number) => [number, number];
    readonly demo_steps_taken: (a: number) => number;
    readonly demo_train: (a: number, b: number) => [number, number, number];
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
