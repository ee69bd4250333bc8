// Boots the real API server (uvicorn + the Python package) once for the whole
// test run; the e2e spec drives it over HTTP. Runs in node, not jsdom.

import { spawn, type ChildProcess } from "node:child_process";
import net from "node:net";
import path from "node:path";
import { fileURLToPath } from "node:url";

function freePort(): Promise<number> {
    return new Promise((resolve, reject) => {
        const server = net.createServer();
        server.listen(0, "127.0.0.1", () => {
            const address = server.address();
            if (address && typeof address === "object") {
                const port = address.port;
                server.close(() => resolve(port));
            } else {
                server.close(() => reject(new Error("no port assigned")));
            }
        });
    });
}

export default async function setup({ provide }: { provide: (key: string, value: string) => void }) {
    const port = await freePort();
    const testsDir = path.dirname(fileURLToPath(import.meta.url));
    const proc: ChildProcess = spawn(
        "python3",
        [
            "-m", "uvicorn",
            "--factory", "e2e_server:make_app",
            "--host", "127.0.0.1",
            "--port", String(port),
            "--log-level", "error",
        ],
        { cwd: testsDir, stdio: ["ignore", "inherit", "inherit"] },
    );
    const url = `http://127.0.0.1:${port}`;
    const deadline = Date.now() + 60_000;
    for (;;) {
        try {
            const response = await fetch(`${url}/api/datasets`);
            if (response.ok) break;
        } catch {
            // server not up yet
        }
        if (proc.exitCode !== null) {
            throw new Error(`API server exited early with code ${proc.exitCode}`);
        }
        if (Date.now() > deadline) {
            proc.kill();
            throw new Error("API server did not become ready in time");
        }
        await new Promise((r) => setTimeout(r, 250));
    }
    provide("serverUrl", url);
    return () => {
        proc.kill("SIGTERM");
    };
}
