// Intake: choose a dataset and strategy, answer the prior-knowledge survey,
// and start the session. The survey answer travels with session creation and
// marks the result for rejection at finalize.

import { SessionCreated, SessionOptions, TeachingApi } from "./api.js";
import { clear, el } from "./dom.js";
import { SessionStore } from "./store.js";

const STRATEGIES = ["rnd", "cc", "wp", "batch", "eer"];

export class IntakeScreen {
    constructor(
        private readonly root: HTMLElement,
        private readonly api: TeachingApi,
        private readonly store: SessionStore | undefined,
        private readonly onStarted: (session: SessionCreated) => void,
    ) {}

    async start(): Promise<void> {
        const datasets = await this.api.datasets();
        clear(this.root);
        this.root.append(el("h2", {}, ["Start a session"]));

        const datasetSelect = el("select", { "data-role": "dataset-select" });
        for (const dataset of datasets) {
            datasetSelect.append(
                el("option", { value: dataset.name }, [
                    `${dataset.name} (${dataset.classes.length} classes)`,
                ]),
            );
        }
        const strategySelect = el("select", { "data-role": "strategy-select" });
        for (const strategy of STRATEGIES) {
            strategySelect.append(el("option", { value: strategy }, [strategy]));
        }
        const priorKnowledge = el("input", {
            type: "checkbox",
            "data-role": "prior-knowledge",
            id: "prior-knowledge",
        });
        const startButton = el("button", { "data-role": "start-button" }, [
            "Begin teaching",
        ]);
        startButton.addEventListener("click", () => void this.begin());

        this.root.append(
            el("label", {}, ["Dataset ", datasetSelect]),
            el("label", {}, ["Strategy ", strategySelect]),
            el("label", { class: "survey", for: "prior-knowledge" }, [
                priorKnowledge,
                " I am already familiar with some of these categories",
            ]),
            startButton,
        );
    }

    private async begin(): Promise<void> {
        const dataset = this.select("dataset-select").value;
        const strategy = this.select("strategy-select").value;
        const priorKnowledge = this.root.querySelector<HTMLInputElement>(
            "[data-role=prior-knowledge]",
        )!.checked;
        const options: SessionOptions = {
            dataset,
            strategy,
            prior_knowledge: priorKnowledge,
        };
        const session = await this.api.createSession(options);
        this.store?.add({
            session_id: session.session_id,
            dataset,
            strategy,
            created_at: new Date().toISOString(),
            phase: "teaching",
            round: 0,
            score: null,
        });
        this.onStarted(session);
    }

    private select(role: string): HTMLSelectElement {
        return this.root.querySelector<HTMLSelectElement>(`[data-role=${role}]`)!;
    }
}
