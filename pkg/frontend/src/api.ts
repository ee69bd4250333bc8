// Typed client for the session API. Every method maps one endpoint; error
// bodies are surfaced as ApiError with the server's wire code.

export type Phase = "teaching" | "testing" | "done";

export interface DatasetInfo {
    name: string;
    classes: string[];
    n_items: number;
}

export interface SessionOptions {
    dataset: string;
    strategy: string;
    seed?: number;
    teach_rounds?: number;
    test_rounds?: number;
    prior_knowledge?: boolean;
}

export interface SessionCreated {
    session_id: string;
    C: number;
    class_names: string[];
    teach_rounds: number;
    test_rounds: number;
}

export interface NextItem {
    phase: Phase;
    round: number;
    total_rounds?: number;
    item_id: string | null;
    image_url: string | null;
}

export interface AnswerReveal {
    true_class?: number;
}

export interface SessionResult {
    score: number;
    mean_test_response_ms: number;
    rejected: boolean;
    reason: string;
    bonus_earned: boolean;
}

export class ApiError extends Error {
    constructor(
        public readonly code: string,
        message: string,
        public readonly status: number,
    ) {
        super(message);
        this.name = "ApiError";
    }
}

export class TeachingApi {
    constructor(private readonly baseUrl: string = "") {}

    async datasets(): Promise<DatasetInfo[]> {
        const body = await this.request("/api/datasets");
        return body.datasets as DatasetInfo[];
    }

    createSession(options: SessionOptions): Promise<SessionCreated> {
        return this.request("/api/sessions", {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify(options),
        });
    }

    nextItem(sessionId: string): Promise<NextItem> {
        return this.request(`/api/sessions/${sessionId}/next`);
    }

    submitAnswer(
        sessionId: string,
        itemId: string,
        classIndex: number,
        responseMs: number,
    ): Promise<AnswerReveal> {
        return this.request(`/api/sessions/${sessionId}/answer`, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({
                item_id: itemId,
                class_index: classIndex,
                response_ms: responseMs,
            }),
        });
    }

    result(sessionId: string): Promise<SessionResult> {
        return this.request(`/api/sessions/${sessionId}/result`);
    }

    imageUrl(path: string): string {
        return this.baseUrl + path;
    }

    private async request(path: string, init?: RequestInit): Promise<any> {
        const response = await fetch(this.baseUrl + path, init);
        let body: any = null;
        try {
            body = await response.json();
        } catch {
            // non-JSON body: fall through to the status check
        }
        if (!response.ok) {
            const code = body?.code ?? "internal";
            const message = body?.message ?? `HTTP ${response.status}`;
            throw new ApiError(code, message, response.status);
        }
        return body;
    }
}

const RETRY_DELAYS_MS = [200, 600, 1500];

/** Retry an idempotent call over transient network failures (not ApiErrors). */
export async function withRetry<T>(call: () => Promise<T>): Promise<T> {
    let lastError: unknown;
    for (let attempt = 0; attempt <= RETRY_DELAYS_MS.length; attempt++) {
        try {
            return await call();
        } catch (error) {
            if (error instanceof ApiError) throw error;
            lastError = error;
            if (attempt < RETRY_DELAYS_MS.length) {
                await new Promise((r) => setTimeout(r, RETRY_DELAYS_MS[attempt]));
            }
        }
    }
    throw lastError;
}
