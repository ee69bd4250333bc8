// Experimenter view: the sessions this client has started, their progress,
// and per-strategy aggregates over finished runs. Polls only the result
// endpoint (read-only); issuing /next from here would consume picks.

import { ApiError, TeachingApi } from "./api.js";
import { clear, el } from "./dom.js";
import { SessionRecord, SessionStore } from "./store.js";

export class Dashboard {
    constructor(
        private readonly root: HTMLElement,
        private readonly api: TeachingApi,
        private readonly store: SessionStore,
    ) {}

    async refresh(): Promise<void> {
        const records = this.store.list();
        for (const record of records) {
            if (record.score === null) {
                await this.tryFetchScore(record);
            }
        }
        this.render(this.store.list());
    }

    private async tryFetchScore(record: SessionRecord): Promise<void> {
        try {
            const result = await this.api.result(record.session_id);
            this.store.update(record.session_id, { phase: "done", score: result.score });
        } catch (error) {
            if (error instanceof ApiError && error.code === "wrong_phase") {
                return; // still running
            }
            if (error instanceof ApiError && error.code === "not_found") {
                return; // server restarted; keep the local record as-is
            }
            throw error;
        }
    }

    private render(records: SessionRecord[]): void {
        clear(this.root);
        this.root.append(el("h2", {}, ["Sessions"]));
        if (!records.length) {
            this.root.append(el("p", { "data-role": "empty" }, ["No sessions yet."]));
            return;
        }
        const table = el("table", { class: "sessions" });
        table.append(
            el("tr", {}, [
                el("th", {}, ["Session"]),
                el("th", {}, ["Dataset"]),
                el("th", {}, ["Strategy"]),
                el("th", {}, ["Phase"]),
                el("th", {}, ["Round"]),
                el("th", {}, ["Score"]),
            ]),
        );
        for (const record of records) {
            table.append(
                el("tr", { "data-role": "dashboard-row", "data-session": record.session_id }, [
                    el("td", {}, [record.session_id.slice(0, 8)]),
                    el("td", {}, [record.dataset]),
                    el("td", {}, [record.strategy]),
                    el("td", {}, [record.phase]),
                    el("td", {}, [String(record.round)]),
                    el("td", {}, [record.score === null ? "-" : record.score.toFixed(2)]),
                ]),
            );
        }
        this.root.append(table);
        this.renderAggregates(records);
    }

    private renderAggregates(records: SessionRecord[]): void {
        const byStrategy = new Map<string, number[]>();
        for (const record of records) {
            if (record.score === null) continue;
            const scores = byStrategy.get(record.strategy) ?? [];
            scores.push(record.score);
            byStrategy.set(record.strategy, scores);
        }
        if (!byStrategy.size) return;
        this.root.append(el("h3", {}, ["Per-strategy results"]));
        const table = el("table", { class: "aggregates" });
        table.append(
            el("tr", {}, [
                el("th", {}, ["Strategy"]),
                el("th", {}, ["Sessions"]),
                el("th", {}, ["Mean score"]),
            ]),
        );
        for (const [strategy, scores] of [...byStrategy.entries()].sort()) {
            const mean = scores.reduce((a, b) => a + b, 0) / scores.length;
            table.append(
                el("tr", { "data-role": "aggregate-row", "data-strategy": strategy }, [
                    el("td", {}, [strategy]),
                    el("td", {}, [String(scores.length)]),
                    el("td", { "data-role": "aggregate-mean" }, [mean.toFixed(3)]),
                ]),
            );
        }
        this.root.append(table);
    }
}
