// Response-time measurement. The clock arms when the current image finishes
// loading, never when the request is made, so network latency is excluded
// from response_ms.

export class ResponseTimer {
    private armedAt: number | null = null;

    arm(): void {
        this.armedAt = performance.now();
    }

    get armed(): boolean {
        return this.armedAt !== null;
    }

    /** Milliseconds since the image became visible; disarms the timer. */
    stop(): number {
        if (this.armedAt === null) {
            throw new Error("response timer was never armed");
        }
        const elapsed = performance.now() - this.armedAt;
        this.armedAt = null;
        return Math.max(0, Math.round(elapsed));
    }

    reset(): void {
        this.armedAt = null;
    }
}
