import { AdminApi } from "./api.js";
import { Console } from "./ui.js";

const console_ = new Console(new AdminApi(""));
console_.start();
