import { ApiClient } from "./api.js";
import { App } from "./app.js";
import { MicrophoneSource } from "./recorder.js";

declare global {
  interface Window {
    AUSC_API_BASE?: string;
  }
}

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const app = new App({
  api: new ApiClient(window.AUSC_API_BASE ?? ""),
  createSource: () => new MicrophoneSource(),
  root,
});
app.mount();
