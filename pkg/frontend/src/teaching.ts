// The participant's round loop: show image, take a guess, reveal the truth
// (teaching only), advance. The class buttons stay disabled until the image
// has finished loading, which is also when the response clock arms, and the
// reveal can only ever render after an answer has been acknowledged. During
// testing no reveal element exists at all.

import { ApiError, NextItem, SessionCreated, TeachingApi, withRetry } from "./api.js";
import { clear, el } from "./dom.js";
import { SessionStore } from "./store.js";
import { ResponseTimer } from "./timer.js";

export interface TeachingScreenOptions {
    root: HTMLElement;
    api: TeachingApi;
    session: SessionCreated;
    store?: SessionStore;
    onFinished: () => void;
}

export class TeachingScreen {
    private readonly root: HTMLElement;
    private readonly api: TeachingApi;
    private readonly session: SessionCreated;
    private readonly store?: SessionStore;
    private readonly onFinished: () => void;
    private readonly timer = new ResponseTimer();
    private readonly keyHandler: (event: KeyboardEvent) => void;

    private current: NextItem | null = null;
    private buttonsEnabled = false;
    private awaitingAck = false;
    // Filled only after the current round's answer is acknowledged; the next
    // pick does not exist server-side before that.
    private prefetched: NextItem | null = null;

    constructor(options: TeachingScreenOptions) {
        this.root = options.root;
        this.api = options.api;
        this.session = options.session;
        this.store = options.store;
        this.onFinished = options.onFinished;
        this.keyHandler = (event) => this.onKeydown(event);
    }

    async start(): Promise<void> {
        document.addEventListener("keydown", this.keyHandler);
        await this.advance();
    }

    dispose(): void {
        document.removeEventListener("keydown", this.keyHandler);
    }

    private async advance(): Promise<void> {
        const item =
            this.prefetched ??
            (await withRetry(() => this.api.nextItem(this.session.session_id)));
        this.prefetched = null;
        if (item.phase === "done") {
            this.dispose();
            this.onFinished();
            return;
        }
        this.current = item;
        this.renderRound(item);
    }

    private renderRound(item: NextItem): void {
        clear(this.root);
        this.buttonsEnabled = false;
        this.timer.reset();

        const phaseLabel = item.phase === "teaching" ? "Teaching" : "Testing";
        const total = item.total_rounds ?? 0;
        this.root.append(
            el("div", { class: "round-header", "data-role": "round-header" }, [
                `${phaseLabel} - image ${item.round + 1} of ${total}`,
            ]),
        );

        const image = el("img", {
            class: "item-image",
            "data-role": "item-image",
            alt: "image to classify",
        });
        image.addEventListener("load", () => {
            this.timer.arm();
            this.setButtonsEnabled(true);
            status.textContent = "Which class is this?";
        });
        image.src = this.api.imageUrl(item.image_url ?? "");
        this.root.append(image);

        const status = el("div", { class: "status", "data-role": "status" }, [
            "Loading image...",
        ]);
        this.root.append(status);

        const buttonRow = el("div", { class: "class-buttons" });
        this.session.class_names.forEach((name, index) => {
            const button = el(
                "button",
                {
                    "data-role": "class-button",
                    "data-class-index": String(index),
                    disabled: "",
                },
                [`${index + 1}. ${name}`],
            );
            button.addEventListener("click", () => void this.answer(index));
            buttonRow.append(button);
        });
        this.root.append(buttonRow);
    }

    private setButtonsEnabled(enabled: boolean): void {
        this.buttonsEnabled = enabled;
        this.root
            .querySelectorAll<HTMLButtonElement>("[data-role=class-button]")
            .forEach((button) => (button.disabled = !enabled));
    }

    private onKeydown(event: KeyboardEvent): void {
        const index = Number.parseInt(event.key, 10) - 1;
        if (Number.isNaN(index) || index < 0 || index >= this.session.C) return;
        // Same path as a click: identical response_ms semantics.
        void this.answer(index);
    }

    private async answer(classIndex: number): Promise<void> {
        if (!this.buttonsEnabled || this.awaitingAck || !this.current) return;
        const item = this.current;
        const responseMs = this.timer.stop();
        this.setButtonsEnabled(false);
        this.awaitingAck = true;
        let reveal;
        try {
            reveal = await this.api.submitAnswer(
                this.session.session_id,
                item.item_id ?? "",
                classIndex,
                responseMs,
            );
        } catch (error) {
            this.awaitingAck = false;
            if (error instanceof ApiError && error.code === "conflict") {
                // Another tab answered first; re-sync from the server.
                await this.advance();
                return;
            }
            throw error;
        }
        this.awaitingAck = false;
        this.store?.update(this.session.session_id, {
            phase: item.phase,
            round: item.round + 1,
        });

        if (item.phase === "teaching") {
            this.showReveal(classIndex, reveal.true_class ?? -1);
            void this.prefetchNext();
        } else {
            await this.advance();
        }
    }

    private showReveal(guess: number, trueClass: number): void {
        const correct = guess === trueClass;
        const name = this.session.class_names[trueClass] ?? `class ${trueClass}`;
        const banner = el(
            "div",
            {
                class: correct ? "reveal correct" : "reveal incorrect",
                "data-role": "reveal",
                "data-correct": String(correct),
            },
            [correct ? `Correct: ${name}` : `Incorrect - this was ${name}`],
        );
        const nextButton = el("button", { "data-role": "next-button" }, ["Next image"]);
        nextButton.addEventListener("click", () => void this.advance());
        banner.append(nextButton);
        this.root.append(banner);
    }

    private async prefetchNext(): Promise<void> {
        try {
            const item = await this.api.nextItem(this.session.session_id);
            this.prefetched = item;
            if (item.image_url) {
                new Image().src = this.api.imageUrl(item.image_url);
            }
        } catch {
            // Best effort; advance() will re-fetch.
            this.prefetched = null;
        }
    }
}
