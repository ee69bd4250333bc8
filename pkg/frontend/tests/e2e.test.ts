// Full-session acceptance flow against the real API server (see
// global-setup.ts): guess-before-reveal on every teaching round, zero reveal
// elements anywhere in the test phase, a response time recorded for every
// round, and a final score screen that matches GET result.

import { beforeEach, describe, expect, inject, it, vi } from "vitest";

import { TeachingApi } from "../src/api.js";
import { ResultsScreen } from "../src/results.js";
import { TeachingScreen } from "../src/teaching.js";

const BASE_URL = inject("serverUrl");

let root: HTMLElement;

beforeEach(() => {
    document.body.innerHTML = "";
    root = document.createElement("div");
    document.body.append(root);
});

function header(): string {
    return root.querySelector("[data-role=round-header]")?.textContent ?? "";
}

function revealCount(): number {
    return root.querySelectorAll("[data-role=reveal]").length;
}

async function waitForRound(label: string): Promise<void> {
    await vi.waitFor(() => expect(header()).toContain(label), { timeout: 15_000 });
}

describe("full session over the live API", () => {
    it("drives teaching and testing end to end", async () => {
        const api = new TeachingApi(BASE_URL);
        const submitSpy = vi.spyOn(api, "submitAnswer");
        const session = await api.createSession({
            dataset: "e2e",
            strategy: "eer",
            seed: 424242,
        });
        expect(session.C).toBe(3);
        expect(session.teach_rounds).toBe(9);
        expect(session.test_rounds).toBe(30);

        let finished = false;
        const screen = new TeachingScreen({
            root,
            api,
            session,
            onFinished: () => {
                finished = true;
            },
        });
        await screen.start();

        for (let round = 0; round < session.teach_rounds; round++) {
            await waitForRound(`Teaching - image ${round + 1}`);
            // Guess-before-reveal: nothing revealed while the guess is open.
            expect(revealCount()).toBe(0);
            const buttons = [
                ...root.querySelectorAll<HTMLButtonElement>("[data-role=class-button]"),
            ];
            expect(buttons.every((b) => b.disabled)).toBe(true);
            root.querySelector<HTMLImageElement>("[data-role=item-image]")!
                .dispatchEvent(new Event("load"));
            expect(buttons.every((b) => !b.disabled)).toBe(true);
            buttons[round % session.C].click();
            await vi.waitFor(() => expect(revealCount()).toBe(1), { timeout: 15_000 });
            const reveal = root.querySelector<HTMLElement>("[data-role=reveal]")!;
            expect(["true", "false"]).toContain(reveal.dataset.correct);
            root.querySelector<HTMLButtonElement>("[data-role=next-button]")!.click();
        }

        for (let round = 0; round < session.test_rounds; round++) {
            await waitForRound(`Testing - image ${round + 1}`);
            expect(revealCount()).toBe(0); // zero reveal elements in the test phase
            root.querySelector<HTMLImageElement>("[data-role=item-image]")!
                .dispatchEvent(new Event("load"));
            const buttons = [
                ...root.querySelectorAll<HTMLButtonElement>("[data-role=class-button]"),
            ];
            buttons[round % session.C].click();
            if (round + 1 < session.test_rounds) {
                await waitForRound(`Testing - image ${round + 2}`);
                expect(revealCount()).toBe(0);
            }
        }

        await vi.waitFor(() => expect(finished).toBe(true), { timeout: 15_000 });

        // A response time was recorded for every one of the 39 rounds.
        expect(submitSpy).toHaveBeenCalledTimes(session.teach_rounds + session.test_rounds);
        for (const call of submitSpy.mock.calls) {
            const responseMs = call[3];
            expect(Number.isFinite(responseMs)).toBe(true);
            expect(responseMs).toBeGreaterThanOrEqual(0);
        }

        // Final score screen shows exactly what GET result reports.
        await new ResultsScreen(root, api).show(session.session_id);
        const apiResult = await api.result(session.session_id);
        const scoreNode = root.querySelector<HTMLElement>("[data-role=final-score]")!;
        expect(scoreNode.dataset.score).toBe(String(apiResult.score));
        expect(scoreNode.textContent).toContain(`${(apiResult.score * 100).toFixed(1)}%`);
    }, 120_000);

    it("restores the same pending item after a refresh mid-round", async () => {
        const api = new TeachingApi(BASE_URL);
        const session = await api.createSession({
            dataset: "e2e",
            strategy: "rnd",
            seed: 777,
        });
        const first = await api.nextItem(session.session_id);
        const second = await api.nextItem(session.session_id); // simulated reload
        expect(second.item_id).toBe(first.item_id);
        expect(second.round).toBe(first.round);
    });

    it("marks prior knowledge at intake and rejects the result", async () => {
        const api = new TeachingApi(BASE_URL);
        const session = await api.createSession({
            dataset: "e2e",
            strategy: "rnd",
            seed: 778,
            prior_knowledge: true,
        });
        for (let round = 0; round < session.teach_rounds + session.test_rounds; round++) {
            const item = await api.nextItem(session.session_id);
            await api.submitAnswer(session.session_id, item.item_id!, 0, 5000);
        }
        const result = await api.result(session.session_id);
        expect(result.rejected).toBe(true);
        expect(result.reason).toBe("prior_knowledge");
    });
});
