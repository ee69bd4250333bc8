import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, TeachingApi, withRetry } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
    return new Response(JSON.stringify(body), {
        status,
        headers: { "content-type": "application/json" },
    });
}

afterEach(() => {
    vi.restoreAllMocks();
    vi.unstubAllGlobals();
});

describe("TeachingApi", () => {
    it("posts session options and parses the creation payload", async () => {
        const fetchMock = vi.fn().mockResolvedValue(
            jsonResponse(
                {
                    session_id: "abc",
                    C: 3,
                    class_names: ["x", "y", "z"],
                    teach_rounds: 9,
                    test_rounds: 30,
                },
                201,
            ),
        );
        vi.stubGlobal("fetch", fetchMock);
        const api = new TeachingApi("http://host");
        const created = await api.createSession({
            dataset: "d",
            strategy: "eer",
            prior_knowledge: true,
        });
        expect(created.session_id).toBe("abc");
        expect(created.C).toBe(3);
        const [url, init] = fetchMock.mock.calls[0];
        expect(url).toBe("http://host/api/sessions");
        expect(JSON.parse(init.body).prior_knowledge).toBe(true);
        expect(JSON.parse(init.body).strategy).toBe("eer");
    });

    it("sends response_ms with every answer", async () => {
        const fetchMock = vi.fn().mockResolvedValue(jsonResponse({ true_class: 2 }));
        vi.stubGlobal("fetch", fetchMock);
        const api = new TeachingApi();
        const reveal = await api.submitAnswer("s1", "item-1", 2, 4321);
        expect(reveal.true_class).toBe(2);
        const [url, init] = fetchMock.mock.calls[0];
        expect(url).toBe("/api/sessions/s1/answer");
        expect(JSON.parse(init.body)).toEqual({
            item_id: "item-1",
            class_index: 2,
            response_ms: 4321,
        });
    });

    it("maps error bodies to ApiError with the wire code", async () => {
        vi.stubGlobal(
            "fetch",
            vi.fn().mockResolvedValue(jsonResponse({ code: "conflict", message: "taken" }, 409)),
        );
        const api = new TeachingApi();
        const error = await api.submitAnswer("s1", "x", 0, 0).catch((e) => e);
        expect(error).toBeInstanceOf(ApiError);
        expect(error.code).toBe("conflict");
        expect(error.status).toBe(409);
    });

    it("lists datasets", async () => {
        vi.stubGlobal(
            "fetch",
            vi.fn().mockResolvedValue(
                jsonResponse({ datasets: [{ name: "d", classes: ["a"], n_items: 5 }] }),
            ),
        );
        const datasets = await new TeachingApi().datasets();
        expect(datasets).toHaveLength(1);
        expect(datasets[0].name).toBe("d");
    });
});

describe("withRetry", () => {
    it("retries transient network failures", async () => {
        vi.useFakeTimers();
        const call = vi
            .fn()
            .mockRejectedValueOnce(new TypeError("fetch failed"))
            .mockRejectedValueOnce(new TypeError("fetch failed"))
            .mockResolvedValue("ok");
        const pending = withRetry(call);
        await vi.runAllTimersAsync();
        await expect(pending).resolves.toBe("ok");
        expect(call).toHaveBeenCalledTimes(3);
        vi.useRealTimers();
    });

    it("does not retry API errors", async () => {
        const call = vi.fn().mockRejectedValue(new ApiError("wrong_phase", "nope", 409));
        await expect(withRetry(call)).rejects.toBeInstanceOf(ApiError);
        expect(call).toHaveBeenCalledTimes(1);
    });
});
