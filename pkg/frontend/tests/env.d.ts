import "vitest";

declare module "vitest" {
    export interface ProvidedContext {
        serverUrl: string;
    }
}
