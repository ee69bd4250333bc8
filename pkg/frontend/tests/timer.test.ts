import { afterEach, describe, expect, it, vi } from "vitest";

import { ResponseTimer } from "../src/timer.js";

afterEach(() => vi.restoreAllMocks());

describe("ResponseTimer", () => {
    it("measures from arm to stop in whole milliseconds", () => {
        const now = vi.spyOn(performance, "now");
        now.mockReturnValueOnce(1000.2); // arm
        now.mockReturnValueOnce(5432.9); // stop
        const timer = new ResponseTimer();
        timer.arm();
        expect(timer.stop()).toBe(4433);
    });

    it("throws when stopped without arming", () => {
        expect(() => new ResponseTimer().stop()).toThrow(/never armed/);
    });

    it("disarms after stop and can be reset", () => {
        const timer = new ResponseTimer();
        timer.arm();
        expect(timer.armed).toBe(true);
        timer.stop();
        expect(timer.armed).toBe(false);
        timer.arm();
        timer.reset();
        expect(timer.armed).toBe(false);
    });

    it("never reports negative time", () => {
        const now = vi.spyOn(performance, "now");
        now.mockReturnValueOnce(100.0);
        now.mockReturnValueOnce(99.9);
        const timer = new ResponseTimer();
        timer.arm();
        expect(timer.stop()).toBe(0);
    });
});
