const { Builder, By } = require("selenium-webdriver");

it("has no trailing newline", async function () {
	const driver = await new Builder().forBrowser("chrome").build();
	await driver.get("http://localhost:5000");
	await driver.findElement(By.id("go")).click();
	await driver.quit();
});