// Bootstrap and view wiring: intake -> teaching -> results, with the
// dashboard reachable via #dashboard.

import { SessionCreated, TeachingApi } from "./api.js";
import { Dashboard } from "./dashboard.js";
import { clear, el } from "./dom.js";
import { IntakeScreen } from "./intake.js";
import { ResultsScreen } from "./results.js";
import { SessionStore } from "./store.js";
import { TeachingScreen } from "./teaching.js";

export function bootstrap(root: HTMLElement, api = new TeachingApi()): void {
    const store = new SessionStore();
    const nav = el("nav", {}, []);
    const participantLink = el("a", { href: "#" }, ["Participate"]);
    const dashboardLink = el("a", { href: "#dashboard" }, ["Dashboard"]);
    nav.append(participantLink, " | ", dashboardLink);
    const view = el("main", { id: "view" });
    root.append(nav, view);

    const showIntake = () => {
        const intake = new IntakeScreen(view, api, store, (session) =>
            void showTeaching(session),
        );
        void intake.start();
    };

    const showTeaching = async (session: SessionCreated) => {
        const screen = new TeachingScreen({
            root: view,
            api,
            session,
            store,
            onFinished: () => void new ResultsScreen(view, api, store).show(session.session_id),
        });
        await screen.start();
    };

    const showDashboard = () => {
        void new Dashboard(view, api, store).refresh();
    };

    const route = () => {
        clear(view);
        if (window.location.hash === "#dashboard") showDashboard();
        else showIntake();
    };
    window.addEventListener("hashchange", route);
    route();
}

if (typeof document !== "undefined" && document.getElementById("app")) {
    bootstrap(document.getElementById("app")!);
}
