// Final score screen, shown only once the session is done.

import { TeachingApi } from "./api.js";
import { clear, el } from "./dom.js";
import { SessionStore } from "./store.js";

export class ResultsScreen {
    constructor(
        private readonly root: HTMLElement,
        private readonly api: TeachingApi,
        private readonly store?: SessionStore,
    ) {}

    async show(sessionId: string): Promise<void> {
        const result = await this.api.result(sessionId);
        this.store?.update(sessionId, { phase: "done", score: result.score });
        clear(this.root);
        this.root.append(
            el("h2", {}, ["Session complete"]),
            el(
                "div",
                {
                    class: "final-score",
                    "data-role": "final-score",
                    "data-score": String(result.score),
                },
                [`Test score: ${(result.score * 100).toFixed(1)}%`],
            ),
            el("div", { "data-role": "mean-time" }, [
                `Average answer time: ${(result.mean_test_response_ms / 1000).toFixed(1)} s`,
            ]),
        );
        if (result.bonus_earned) {
            this.root.append(
                el("div", { class: "bonus", "data-role": "bonus" }, [
                    "Bonus threshold reached!",
                ]),
            );
        }
        if (result.rejected) {
            this.root.append(
                el("div", { class: "rejected", "data-role": "rejected" }, [
                    `Result excluded from the study (${result.reason}).`,
                ]),
            );
        }
    }
}
